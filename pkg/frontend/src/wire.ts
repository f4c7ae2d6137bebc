/**
 * Line-delimited JSON-RPC client for the edgesim gateway.
 *
 * The gateway speaks newline-framed JSON-RPC 2.0 on stdio, so the whole
 * transport fits in one small class: spawn `python3 -m edgesim.gateway`,
 * write one JSON object per line, pair responses to requests by id.
 */

import { spawn, type ChildProcessByStdio } from "node:child_process";
import { createInterface, type Interface } from "node:readline";
import type { Readable, Writable } from "node:stream";

export const PROTOCOL_VERSION = "2024-11-05";

export interface ToolSpec {
  name: string;
  description: string;
  inputSchema: Record<string, unknown>;
  outputSchema?: Record<string, unknown>;
}

/** Decoded tools/call result: the structured payload plus the error flag. */
export interface ToolResult {
  payload: Record<string, unknown>;
  isError: boolean;
}

export class ToolCallError extends Error {
  constructor(
    readonly code: string | number,
    readonly detail: string,
  ) {
    super(`[${code}] ${detail}`);
    this.name = "ToolCallError";
  }
}

interface Pending {
  resolve: (result: Record<string, unknown>) => void;
  reject: (error: Error) => void;
}

export interface GatewayOptions {
  /** Seed forwarded to the gateway process; pins sim ids and workloads. */
  seed?: number | string;
  /** Identity stamped into each tool call's _meta and the audit log. */
  actor?: string;
  pythonBin?: string;
  extraArgs?: string[];
}

export class GatewayConnection {
  readonly actor: string;
  serverInfo: Record<string, unknown> | null = null;

  private proc: ChildProcessByStdio<Writable, Readable, null>;
  private lines: Interface;
  private pending = new Map<number, Pending>();
  private nextId = 0;
  private closed = false;

  private constructor(opts: GatewayOptions) {
    this.actor = opts.actor ?? "chat-cli";
    const args = [
      "-m",
      "edgesim.gateway",
      "--seed",
      String(opts.seed ?? 0),
      ...(opts.extraArgs ?? []),
    ];
    this.proc = spawn(opts.pythonBin ?? "python3", args, {
      stdio: ["pipe", "pipe", "inherit"],
    });
    this.lines = createInterface({ input: this.proc.stdout });
    this.lines.on("line", (line) => this.onLine(line));
    this.proc.on("exit", () => this.failAll(new Error("gateway exited")));
    this.proc.on("error", (err) => this.failAll(err));
  }

  /** Spawn the gateway and complete the initialize handshake. */
  static async open(opts: GatewayOptions = {}): Promise<GatewayConnection> {
    const conn = new GatewayConnection(opts);
    conn.serverInfo = await conn.request("initialize", {
      protocolVersion: PROTOCOL_VERSION,
      capabilities: {},
      clientInfo: { name: conn.actor, version: "0.1.0" },
    });
    conn.notify("notifications/initialized");
    return conn;
  }

  private onLine(line: string): void {
    let message: Record<string, unknown>;
    try {
      message = JSON.parse(line);
    } catch {
      return; // not ours; the gateway only emits JSON lines
    }
    const id = message["id"];
    if (typeof id !== "number") return;
    const waiter = this.pending.get(id);
    if (!waiter) return;
    this.pending.delete(id);
    const error = message["error"] as
      | { code?: string | number; message?: string }
      | undefined;
    if (error) {
      waiter.reject(new ToolCallError(error.code ?? "internal", error.message ?? ""));
    } else {
      waiter.resolve(message["result"] as Record<string, unknown>);
    }
  }

  private failAll(error: Error): void {
    for (const waiter of this.pending.values()) waiter.reject(error);
    this.pending.clear();
  }

  request(method: string, params: Record<string, unknown> = {}): Promise<Record<string, unknown>> {
    if (this.closed) return Promise.reject(new Error("connection closed"));
    const id = ++this.nextId;
    const promise = new Promise<Record<string, unknown>>((resolve, reject) => {
      this.pending.set(id, { resolve, reject });
    });
    this.send({ jsonrpc: "2.0", id, method, params });
    return promise;
  }

  notify(method: string, params?: Record<string, unknown>): void {
    const envelope: Record<string, unknown> = { jsonrpc: "2.0", method };
    if (params) envelope["params"] = params;
    this.send(envelope);
  }

  private send(envelope: Record<string, unknown>): void {
    this.proc.stdin.write(JSON.stringify(envelope) + "\n");
  }

  async listTools(): Promise<ToolSpec[]> {
    const result = await this.request("tools/list");
    return result["tools"] as ToolSpec[];
  }

  /**
   * Run one tool call and decode the result envelope. Tool-level failures
   * come back as `isError: true` with a {code, message} payload; protocol
   * failures reject.
   */
  async callTool(
    name: string,
    args: Record<string, unknown> = {},
    opts: { actor?: string; windowIndex?: number } = {},
  ): Promise<ToolResult> {
    const meta: Record<string, unknown> = { actor: opts.actor ?? this.actor };
    if (opts.windowIndex !== undefined) meta["window_index"] = opts.windowIndex;
    const result = await this.request("tools/call", {
      name,
      arguments: args,
      _meta: meta,
    });
    let payload = result["structuredContent"] as Record<string, unknown> | undefined;
    if (payload === undefined) {
      const content = result["content"] as Array<{ text: string }>;
      payload = JSON.parse(content[0].text);
    }
    return { payload: payload as Record<string, unknown>, isError: Boolean(result["isError"]) };
  }

  /** Like callTool, but raises ToolCallError on tool-level failures. */
  async mustCall(
    name: string,
    args: Record<string, unknown> = {},
    opts: { actor?: string; windowIndex?: number } = {},
  ): Promise<Record<string, unknown>> {
    const { payload, isError } = await this.callTool(name, args, opts);
    if (isError) {
      throw new ToolCallError(
        (payload["code"] as string) ?? "internal",
        (payload["message"] as string) ?? "",
      );
    }
    return payload;
  }

  /** Close stdin and wait for the gateway process to exit. */
  async close(): Promise<void> {
    if (this.closed) return;
    this.closed = true;
    this.proc.stdin.end();
    await new Promise<void>((resolve) => {
      const timer = setTimeout(() => {
        this.proc.kill();
        resolve();
      }, 5_000);
      this.proc.on("exit", () => {
        clearTimeout(timer);
        resolve();
      });
      if (this.proc.exitCode !== null) {
        clearTimeout(timer);
        resolve();
      }
    });
  }
}
