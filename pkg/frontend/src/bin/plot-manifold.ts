#!/usr/bin/env node
import { runManifoldCli } from "../cli.js";

process.exit(runManifoldCli(process.argv.slice(2)));
