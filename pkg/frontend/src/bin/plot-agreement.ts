#!/usr/bin/env node
import { runAgreementCli } from "../cli.js";

process.exit(runAgreementCli(process.argv.slice(2)));
