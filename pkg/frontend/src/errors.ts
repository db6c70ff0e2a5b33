/** Error taxonomy shared by the figure scripts. */

/** Input data violates a documented artifact schema or is unusable. */
export class FormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "FormatError";
  }
}

/** Command line misuse: unknown flag, missing argument, bad axes. */
export class UsageError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "UsageError";
  }
}
