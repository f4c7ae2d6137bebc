/**
 * Chat session: drives the completion backend against the gateway tool
 * catalog, executes emitted tool calls in order, and keeps an append-only
 * log that exports as a replayable transcript.
 *
 * Gateway tool results do not carry audit sequence numbers, so finalize()
 * pulls the audit log filtered by this session's actor and aligns it with
 * the recorded calls one-to-one; the bookkeeping export itself runs under
 * a derived actor name so it never lands in that slice.
 */

import { writeFile } from "node:fs/promises";

import type { CompletionBackend, ToolOutcome } from "./backend.js";
import type { GatewayConnection, ToolSpec } from "./wire.js";

export interface UserTurn {
  role: "user";
  timestamp: number;
  text: string;
}

/**
 * Model turn; toolCallRefs lists the calls it emitted. While the session
 * is live the refs are indexes into toolCalls; the exported transcript
 * carries audit sequence numbers instead.
 */
export interface ModelTurn {
  role: "model";
  timestamp: number;
  text: string;
  toolCallRefs: number[];
}

export interface ToolTurn {
  role: "tool";
  timestamp: number;
  toolCallRef: number;
}

export type Turn = UserTurn | ModelTurn | ToolTurn;

export interface ResolvedToolCall {
  /** Gateway audit sequence number; assigned by finalize(). */
  sequence: number | null;
  tool: string;
  arguments: Record<string, unknown>;
  result: Record<string, unknown>;
  isError: boolean;
}

export interface Transcript {
  session: {
    actor: string;
    protocolVersion: string;
    server: Record<string, unknown>;
  };
  turns: Turn[];
  toolCalls: ResolvedToolCall[];
  configurations: Array<{ tool: string; arguments: Record<string, unknown> }>;
  simulationIds: string[];
}

export interface SessionOptions {
  /**
   * Turn timestamps. Defaults to a logical counter (0, 1, 2, ...) so a
   * fixed script yields a byte-identical transcript on every rerun; the
   * interactive CLI passes Date.now instead.
   */
  clock?: () => number;
  /** Called after each executed tool call; the CLI uses it to echo. */
  onToolCall?: (call: ResolvedToolCall, index: number) => void;
  /** Safety cap on backend rounds per prompt. */
  maxRounds?: number;
}

export class ChatSession {
  readonly turns: Turn[] = [];
  readonly toolCalls: ResolvedToolCall[] = [];
  readonly simulationIds: string[] = [];
  readonly configurations: Array<{ tool: string; arguments: Record<string, unknown> }> = [];

  private tools: ToolSpec[] | null = null;
  private logicalClock = 0;
  private readonly clock: () => number;
  private readonly onToolCall?: (call: ResolvedToolCall, index: number) => void;
  private readonly maxRounds: number;

  constructor(
    private readonly gateway: GatewayConnection,
    private readonly backend: CompletionBackend,
    opts: SessionOptions = {},
  ) {
    this.clock = opts.clock ?? (() => this.logicalClock++);
    this.onToolCall = opts.onToolCall;
    this.maxRounds = opts.maxRounds ?? 8;
  }

  /** Fetch the tool catalog once; later asks reuse it. */
  async catalog(): Promise<ToolSpec[]> {
    if (this.tools === null) this.tools = await this.gateway.listTools();
    return this.tools;
  }

  /**
   * One user prompt: record it, loop the backend until a round emits no
   * tool calls, executing each call in model order. Returns the final text.
   */
  async ask(prompt: string): Promise<string> {
    const tools = await this.catalog();
    this.turns.push({ role: "user", timestamp: this.clock(), text: prompt });

    const executed: ToolOutcome[] = [];
    for (let round = 0; round < this.maxRounds; round++) {
      const completion = await this.backend.complete(prompt, tools, executed);
      const refs: number[] = [];
      const modelTurn: ModelTurn = {
        role: "model",
        timestamp: this.clock(),
        text: completion.text,
        toolCallRefs: refs,
      };
      this.turns.push(modelTurn);

      for (const request of completion.toolCalls) {
        const { payload, isError } = await this.gateway.callTool(
          request.name,
          request.arguments,
        );
        const call: ResolvedToolCall = {
          sequence: null,
          tool: request.name,
          arguments: request.arguments,
          result: payload,
          isError,
        };
        const index = this.toolCalls.length;
        this.toolCalls.push(call);
        refs.push(index);
        this.turns.push({ role: "tool", timestamp: this.clock(), toolCallRef: index });
        this.recordSideEffects(call);
        executed.push({ ...request, result: payload, isError });
        this.onToolCall?.(call, index);
      }

      if (completion.toolCalls.length === 0) return completion.text;
    }
    throw new Error(`backend kept emitting tool calls past ${this.maxRounds} rounds`);
  }

  private recordSideEffects(call: ResolvedToolCall): void {
    if (call.tool.startsWith("create")) {
      this.configurations.push({ tool: call.tool, arguments: call.arguments });
    }
    const simId = call.result["simulation_id"];
    if (typeof simId === "string" && !this.simulationIds.includes(simId)) {
      this.simulationIds.push(simId);
    }
  }

  /**
   * Resolve audit sequence numbers for every recorded call and build the
   * transcript. Throws if the gateway audit slice for this actor does not
   * match the session's calls one-to-one, in order.
   */
  async finalize(): Promise<Transcript> {
    const exported = await this.gateway.mustCall(
      "export_audit_log",
      { actor: this.gateway.actor },
      { actor: `${this.gateway.actor}:export` },
    );
    const records = exported["records"] as Array<Record<string, unknown>>;
    if (records.length !== this.toolCalls.length) {
      throw new Error(
        `audit log holds ${records.length} records for actor ` +
          `${this.gateway.actor} but the session made ${this.toolCalls.length} calls`,
      );
    }
    records.forEach((record, i) => {
      const call = this.toolCalls[i];
      if (record["tool"] !== call.tool) {
        throw new Error(
          `audit record ${i} is for tool ${record["tool"]}, session call was ${call.tool}`,
        );
      }
      call.sequence = record["sequence"] as number;
    });

    const seqOf = (index: number): number => this.toolCalls[index].sequence as number;
    const turns = this.turns.map((turn): Turn => {
      if (turn.role === "model") {
        return { ...turn, toolCallRefs: turn.toolCallRefs.map(seqOf) };
      }
      if (turn.role === "tool") {
        return { ...turn, toolCallRef: seqOf(turn.toolCallRef) };
      }
      return turn;
    });

    const server = this.gateway.serverInfo ?? {};
    return {
      session: {
        actor: this.gateway.actor,
        protocolVersion: (server["protocolVersion"] as string) ?? "",
        server: (server["serverInfo"] as Record<string, unknown>) ?? {},
      },
      turns,
      toolCalls: this.toolCalls,
      configurations: this.configurations,
      simulationIds: this.simulationIds,
    };
  }
}

export function renderTranscript(transcript: Transcript): string {
  return JSON.stringify(transcript, null, 2) + "\n";
}

export async function writeTranscript(transcript: Transcript, path: string): Promise<void> {
  await writeFile(path, renderTranscript(transcript), "utf8");
}
