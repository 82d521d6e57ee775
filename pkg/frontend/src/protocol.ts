/**
 * Client side of the pednav environment wire protocol: newline-delimited
 * strict JSON over a TCP socket or a spawned subprocess's stdio. The
 * protocol is lockstep request/reply, so the transport is a single queue
 * of pending replies.
 */

import * as net from "node:net";
import { spawn, type ChildProcessByStdio } from "node:child_process";
import type { Readable, Writable } from "node:stream";

export class ProtocolError extends Error {}

export interface WireVehicle {
  px: number;
  py: number;
  vx: number;
  vy: number;
  theta: number;
  radius: number;
  v_pref: number;
  gx: number;
  gy: number;
}

export interface WireGaussian {
  mx: number;
  my: number;
  sxx: number;
  sxy: number;
  syy: number;
}

export interface WirePedestrian {
  id: string;
  px: number;
  py: number;
  track: WireGaussian[];
}

export interface WireObservation {
  t: number;
  av: WireVehicle;
  peds: WirePedestrian[];
}

export interface ActionBounds {
  v_min: number;
  v_max: number;
  dtheta_max: number;
}

export interface ConfigReply {
  type: "config";
  protocol: string;
  config: Record<string, unknown>;
  action_bounds: ActionBounds;
  splits: Record<string, number>;
}

export interface ScenariosReply {
  type: "scenarios";
  split: string;
  ids: string[];
}

export interface ObservationReply {
  type: "observation";
  observation: WireObservation;
}

export interface StepInfo {
  branch: string;
  r_progress: number;
  r_pred: number;
  r_action: number;
  r_danger: number;
  danger: boolean;
  d_min: number | null;
}

export interface StepReply {
  type: "step_result";
  observation: WireObservation;
  reward: number;
  done: boolean;
  terminal_kind: string | null;
  info: StepInfo;
}

type Reply = Record<string, unknown> & { type?: string };

interface LineTransport {
  write(line: string): void;
  close(): void;
}

/** Split a byte stream into newline-terminated lines. */
class LineSplitter {
  private buf = "";

  constructor(private readonly onLine: (line: string) => void) {}

  push(chunk: Buffer | string): void {
    this.buf += chunk.toString();
    let idx: number;
    while ((idx = this.buf.indexOf("\n")) >= 0) {
      const line = this.buf.slice(0, idx);
      this.buf = this.buf.slice(idx + 1);
      if (line.trim().length > 0) this.onLine(line);
    }
  }
}

/**
 * Request/reply client over an endpoint string: "host:port" connects a TCP
 * socket, "cmd:<command line>" spawns the command (split on whitespace,
 * no quoting) and speaks over its stdio.
 */
export class EnvClient {
  /** Raw JSON text of the most recent reply, exactly as served. */
  lastRaw = "";

  private pending: Array<{
    resolve: (r: Reply) => void;
    reject: (e: Error) => void;
  }> = [];
  private closed = false;

  private constructor(private readonly transport: LineTransport) {}

  static async connect(endpoint: string): Promise<EnvClient> {
    let client: EnvClient;
    const onLine = (line: string) => client.handleLine(line);
    const onClose = () => client.handleClose();

    if (endpoint.startsWith("cmd:")) {
      const argv = endpoint.slice(4).trim().split(/\s+/);
      if (argv.length === 0 || argv[0] === "") {
        throw new ProtocolError(`empty command in endpoint ${endpoint}`);
      }
      const child: ChildProcessByStdio<Writable, Readable, null> = spawn(
        argv[0],
        argv.slice(1),
        { stdio: ["pipe", "pipe", "inherit"] },
      );
      const splitter = new LineSplitter(onLine);
      child.stdout.on("data", (c) => splitter.push(c));
      child.on("close", onClose);
      client = new EnvClient({
        write: (line) => child.stdin.write(line),
        close: () => {
          child.stdin.end();
          child.kill();
        },
      });
      return client;
    }

    const sep = endpoint.lastIndexOf(":");
    const host = endpoint.slice(0, sep);
    const port = Number(endpoint.slice(sep + 1));
    if (sep < 0 || !Number.isInteger(port) || port <= 0) {
      throw new ProtocolError(
        `endpoint ${JSON.stringify(endpoint)} is neither host:port nor cmd:...`,
      );
    }
    const sock = await new Promise<net.Socket>((resolve, reject) => {
      const s = net.createConnection({ host, port }, () => {
        s.off("error", reject);
        resolve(s);
      });
      s.once("error", reject);
    });
    const splitter = new LineSplitter(onLine);
    sock.on("data", (c) => splitter.push(c));
    sock.on("close", onClose);
    sock.on("error", () => sock.destroy());
    client = new EnvClient({
      write: (line) => sock.write(line),
      close: () => sock.destroy(),
    });
    return client;
  }

  private handleLine(line: string): void {
    const waiter = this.pending.shift();
    if (!waiter) return; // unsolicited line; protocol is lockstep
    this.lastRaw = line;
    let msg: Reply;
    try {
      msg = JSON.parse(line) as Reply;
    } catch (e) {
      waiter.reject(new ProtocolError(`reply is not valid JSON: ${line}`));
      return;
    }
    waiter.resolve(msg);
  }

  private handleClose(): void {
    this.closed = true;
    const waiters = this.pending;
    this.pending = [];
    for (const w of waiters) {
      w.reject(new ProtocolError("server closed the connection"));
    }
  }

  request(msg: Record<string, unknown>): Promise<Reply> {
    if (this.closed) {
      return Promise.reject(new ProtocolError("connection is closed"));
    }
    return new Promise((resolve, reject) => {
      this.pending.push({ resolve, reject });
      this.transport.write(JSON.stringify(msg) + "\n");
    });
  }

  private async expect<T extends Reply>(
    msg: Record<string, unknown>,
    replyType: string,
  ): Promise<T> {
    const reply = await this.request(msg);
    if (reply.type === "error") {
      throw new ProtocolError(`server reported: ${reply.message}`);
    }
    if (reply.type !== replyType) {
      throw new ProtocolError(
        `expected ${JSON.stringify(replyType)}, got ${JSON.stringify(reply.type)}`,
      );
    }
    return reply as T;
  }

  hello(): Promise<ConfigReply> {
    return this.expect<ConfigReply & Reply>({ type: "hello" }, "config");
  }

  async listScenarios(split = "all"): Promise<string[]> {
    const reply = await this.expect<ScenariosReply & Reply>(
      { type: "list_scenarios", split },
      "scenarios",
    );
    return reply.ids;
  }

  reset(scenarioId: string): Promise<ObservationReply> {
    return this.expect<ObservationReply & Reply>(
      { type: "reset", scenario_id: scenarioId },
      "observation",
    );
  }

  step(v: number, dtheta: number): Promise<StepReply> {
    return this.expect<StepReply & Reply>(
      { type: "step", v, dtheta },
      "step_result",
    );
  }

  close(): void {
    this.closed = true;
    this.transport.close();
  }
}
