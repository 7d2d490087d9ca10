/** Shared test helpers: tiny label datasets and a raw protocol client. */
import { ChildProcess, spawn } from "child_process";
import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { PNG } from "pngjs";
import { mulberry32 } from "../src/data";
import { Tensor, encodeRequest } from "../src/wire";

export function makeLabelDataset(
  count: number,
  size: number,
  classes: number,
  seed: number,
): string {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "refine-test-"));
  fs.mkdirSync(path.join(dir, "labels"), { recursive: true });
  const rand = mulberry32(seed);
  for (let i = 0; i < count; i++) {
    const png = new PNG({ width: size, height: size });
    const labels = new Uint8Array(size * size);
    const cA = Math.floor(rand() * classes);
    const cB = Math.floor(rand() * classes);
    const split = Math.floor(size * (0.3 + 0.4 * rand()));
    for (let y = 0; y < size; y++) {
      for (let x = 0; x < size; x++) labels[y * size + x] = x < split ? cA : cB;
    }
    for (let l = 0; l < 4; l++) {
      const cls = Math.floor(rand() * classes);
      const row = Math.floor(rand() * size);
      const width = 1 + Math.floor(rand() * 2);
      for (let x = 0; x < size; x++) {
        for (let dy = 0; dy < width; dy++) {
          if (row + dy < size) labels[(row + dy) * size + x] = cls;
        }
      }
    }
    for (let p = 0; p < size * size; p++) {
      png.data[4 * p] = labels[p];
      png.data[4 * p + 1] = labels[p];
      png.data[4 * p + 2] = labels[p];
      png.data[4 * p + 3] = 255;
    }
    const name = `t_${String(i).padStart(3, "0")}.png`;
    fs.writeFileSync(path.join(dir, "labels", name), PNG.sync.write(png));
  }
  return dir;
}

export const SERVER_JS = path.join(__dirname, "..", "dist", "server.js");

/** Minimal client speaking the wire protocol to a spawned server. */
export class TestClient {
  readonly child: ChildProcess;
  readonly clientLog: Buffer[] = [];
  readonly serverLog: Buffer[] = [];
  private pending: Buffer = Buffer.alloc(0);
  private waiters: Array<() => void> = [];
  private closed = false;

  constructor(args: string[]) {
    this.child = spawn("node", [SERVER_JS, ...args], {
      stdio: ["pipe", "pipe", "inherit"],
    });
    this.child.stdout!.on("data", (chunk: Buffer) => {
      this.serverLog.push(chunk);
      this.pending = Buffer.concat([this.pending, chunk]);
      const ws = this.waiters;
      this.waiters = [];
      ws.forEach((w) => w());
    });
    this.child.stdout!.on("end", () => {
      this.closed = true;
      const ws = this.waiters;
      this.waiters = [];
      ws.forEach((w) => w());
    });
  }

  async read(n: number, timeoutMs = 5000): Promise<Buffer> {
    const deadline = Date.now() + timeoutMs;
    while (this.pending.length < n) {
      if (this.closed) throw new Error("server closed its output");
      if (Date.now() > deadline) throw new Error(`timed out waiting for ${n} bytes`);
      await new Promise<void>((resolve) => {
        const timer = setTimeout(resolve, 50);
        this.waiters.push(() => {
          clearTimeout(timer);
          resolve();
        });
      });
    }
    const out = this.pending.subarray(0, n);
    this.pending = this.pending.subarray(n);
    return out;
  }

  writeRaw(buf: Buffer): void {
    this.clientLog.push(buf);
    this.child.stdin!.write(buf);
  }

  async handshake(): Promise<void> {
    const hs = await this.read(8);
    if (hs.toString("ascii", 0, 4) !== "MGNS") throw new Error("bad handshake");
    if (hs.readUInt32LE(4) !== 1) throw new Error("bad version");
  }

  request(opcode: number, tensors: Tensor[]): void {
    this.writeRaw(encodeRequest({ opcode, tensors }));
  }

  async readStatus(): Promise<number> {
    return (await this.read(1)).readUInt8(0);
  }

  async readTensor(): Promise<Tensor> {
    const ndim = (await this.read(4)).readUInt32LE(0);
    const dimsBuf = await this.read(4 * ndim);
    const dims: number[] = [];
    let count = 1;
    for (let i = 0; i < ndim; i++) {
      dims.push(dimsBuf.readUInt32LE(4 * i));
      count *= dims[i];
    }
    const payload = await this.read(4 * count);
    const data = new Float32Array(count);
    for (let i = 0; i < count; i++) data[i] = payload.readFloatLE(4 * i);
    return { dims, data };
  }

  async readErrorMessage(): Promise<string> {
    const len = (await this.read(4)).readUInt32LE(0);
    return (await this.read(len)).toString("utf-8");
  }

  async close(): Promise<number | null> {
    this.child.stdin!.end();
    return new Promise((resolve) => this.child.on("exit", (code) => resolve(code)));
  }

  kill(): void {
    this.child.kill();
  }
}

export function randomTensor(rand: () => number, dims: number[]): Tensor {
  let count = 1;
  for (const d of dims) count *= d;
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) data[i] = rand() * 4 - 2;
  return { dims, data };
}
