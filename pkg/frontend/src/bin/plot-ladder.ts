#!/usr/bin/env node
import { runLadderCli } from "../cli.js";

process.exit(runLadderCli(process.argv.slice(2)));
