/**
 * Completion backends: the one narrow interface a real language model
 * bridge would implement, plus the deterministic mock the tests use.
 */

import type { ToolSpec } from "./wire.js";

export interface ToolRequest {
  name: string;
  arguments: Record<string, unknown>;
}

/** A tool request the session already executed, with its outcome. */
export interface ToolOutcome extends ToolRequest {
  result: Record<string, unknown>;
  isError: boolean;
}

export interface Completion {
  text: string;
  toolCalls: ToolRequest[];
}

/**
 * One model round: given the user prompt, the gateway tool catalog, and
 * the tool outcomes already executed for this prompt, produce reply text
 * and/or further tool calls. The session loops until a round returns no
 * tool calls.
 */
export interface CompletionBackend {
  complete(
    prompt: string,
    tools: ToolSpec[],
    executed: ToolOutcome[],
  ): Promise<Completion>;
}

const WORD_NUMBERS: Record<string, number> = {
  one: 1,
  two: 2,
  three: 3,
  four: 4,
  five: 5,
  six: 6,
  seven: 7,
  eight: 8,
  nine: 9,
  ten: 10,
  eleven: 11,
  twelve: 12,
};

function parseCount(token: string | undefined): number | null {
  if (!token) return null;
  const lowered = token.toLowerCase();
  if (lowered in WORD_NUMBERS) return WORD_NUMBERS[lowered];
  const parsed = Number.parseInt(lowered, 10);
  return Number.isNaN(parsed) ? null : parsed;
}

function catalogSummary(tools: ToolSpec[]): string {
  const lines = tools.map((tool) => {
    const sentence = tool.description.split(". ")[0].replace(/\.$/, "");
    return `- ${tool.name}: ${sentence}`;
  });
  return [
    `I can drive the simulation service through ${tools.length} gateway tools:`,
    ...lines,
    "Ask me to create a simulation, deploy or move application stages, manage users, run windows, or pull metrics.",
  ].join("\n");
}

function describeCreate(outcome: ToolOutcome): string {
  if (outcome.isError) {
    return `The create call failed (${outcome.result["code"]}): ${outcome.result["message"]}`;
  }
  const r = outcome.result;
  return [
    `Done. ${r["summary"]}`,
    `- simulation_id: ${r["simulation_id"]}`,
    `- name: ${r["name"]}`,
    `- state: ${r["state"]}`,
  ].join("\n");
}

/**
 * Scripted stand-in for a hosted model. It answers the capability
 * question from the live tool catalog, turns "create a simulation with
 * N clusters ... M nodes" into one create_default_simulation call and
 * then reports the returned simulation id, and replies with plain text
 * (zero tool calls) to anything it does not recognize.
 */
export class MockBackend implements CompletionBackend {
  async complete(
    prompt: string,
    tools: ToolSpec[],
    executed: ToolOutcome[],
  ): Promise<Completion> {
    if (executed.length > 0) {
      // Second round of a tool-calling prompt: narrate the outcome.
      return { text: describeCreate(executed[executed.length - 1]), toolCalls: [] };
    }

    if (/what can you do|capabilit/i.test(prompt)) {
      return { text: catalogSummary(tools), toolCalls: [] };
    }

    const clusters = parseCount(/(\w+)\s+clusters?/i.exec(prompt)?.[1]);
    const nodes = parseCount(/(\w+)\s+nodes?/i.exec(prompt)?.[1]);
    if (/create/i.test(prompt) && clusters !== null && nodes !== null) {
      return {
        text: "",
        toolCalls: [
          {
            name: "create_default_simulation",
            arguments: { clusters, nodes_per_cluster: nodes },
          },
        ],
      };
    }

    return {
      text:
        "I only have scripted answers in mock mode. Ask what I can do, or ask me to " +
        'create a simulation (for example: "create a simulation with three clusters, ' +
        'each with 10 nodes").',
      toolCalls: [],
    };
  }
}
