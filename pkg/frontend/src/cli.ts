#!/usr/bin/env node
/**
 * Terminal chat REPL against the edgesim gateway.
 *
 *   edgesim-chat [--seed N] [--actor NAME] [--transcript PATH] [--python BIN]
 *
 * Prompts are sent to the completion backend (the deterministic mock in
 * this build; swap in a hosted model behind CompletionBackend); emitted
 * tool calls run against the gateway and are echoed inline. On exit the
 * session transcript, with its audit sequence numbers resolved, is written
 * to --transcript if given.
 */

import { createInterface } from "node:readline/promises";
import { stdin, stdout } from "node:process";

import { MockBackend } from "./backend.js";
import { ChatSession, writeTranscript } from "./session.js";
import { GatewayConnection } from "./wire.js";

interface CliOptions {
  seed: number;
  actor: string;
  transcript: string | null;
  python: string | null;
}

function parseArgs(argv: string[]): CliOptions {
  const opts: CliOptions = { seed: 0, actor: "chat-cli", transcript: null, python: null };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    const value = () => {
      const v = argv[++i];
      if (v === undefined) throw new Error(`missing value for ${flag}`);
      return v;
    };
    switch (flag) {
      case "--seed":
        opts.seed = Number.parseInt(value(), 10);
        break;
      case "--actor":
        opts.actor = value();
        break;
      case "--transcript":
        opts.transcript = value();
        break;
      case "--python":
        opts.python = value();
        break;
      case "--help":
      case "-h":
        stdout.write(
          "usage: edgesim-chat [--seed N] [--actor NAME] [--transcript PATH] [--python BIN]\n",
        );
        process.exit(0);
        break;
      default:
        throw new Error(`unknown flag ${flag}`);
    }
  }
  return opts;
}

async function main(): Promise<void> {
  const opts = parseArgs(process.argv.slice(2));
  const gateway = await GatewayConnection.open({
    seed: opts.seed,
    actor: opts.actor,
    pythonBin: opts.python ?? undefined,
  });
  const session = new ChatSession(gateway, new MockBackend(), {
    clock: () => Date.now(),
    onToolCall: (call) => {
      const status = call.isError ? "error" : "ok";
      stdout.write(`tool> ${call.tool} ${JSON.stringify(call.arguments)} -> ${status}\n`);
    },
  });

  // Iterate lines instead of rl.question: the iterator buffers input that
  // arrives while a prompt is still being processed (piped scripts).
  const rl = createInterface({ input: stdin, output: stdout, prompt: "you> " });
  try {
    rl.prompt();
    for await (const line of rl) {
      const trimmed = line.trim();
      if (trimmed === "exit" || trimmed === "quit") break;
      if (trimmed !== "") {
        const reply = await session.ask(trimmed);
        stdout.write(`model> ${reply}\n`);
      }
      rl.prompt();
    }
  } finally {
    rl.close();
    if (opts.transcript) {
      const transcript = await session.finalize();
      await writeTranscript(transcript, opts.transcript);
      stdout.write(`transcript written to ${opts.transcript}\n`);
    }
    await gateway.close();
  }
}

main().catch((err) => {
  console.error(err instanceof Error ? err.message : err);
  process.exit(1);
});
