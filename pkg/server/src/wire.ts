/**
 * Framed binary protocol over stdio.
 *
 * Handshake (server -> client): "MGNS" + u32 LE version.
 * Request  (client -> server): "MGN1" + u8 opcode + u8 tensor count,
 *   each tensor as u32 LE ndim, ndim u32 LE dims, f32 LE row-major data.
 * Response (server -> client): u8 status; status 0 is followed by one
 *   tensor, anything else by u32 LE message length + UTF-8 message.
 */

export const HANDSHAKE_MAGIC = "MGNS";
export const REQUEST_MAGIC = "MGN1";
export const PROTOCOL_VERSION = 1;
export const OP_SEGMENT = 1;
export const OP_COMBINE = 2;

export const MAX_NDIM = 8;
export const MAX_ELEMS = 1 << 28;

export interface Tensor {
  dims: number[];
  data: Float32Array;
}

export class WireError extends Error {}

/** Pull-based byte reader over a Node stream; resolves null at EOF. */
export class ByteReader {
  private chunks: Buffer[] = [];
  private total = 0;
  private ended = false;
  private wakeups: Array<() => void> = [];

  constructor(stream: NodeJS.ReadableStream) {
    stream.on("data", (chunk: Buffer) => {
      this.chunks.push(chunk);
      this.total += chunk.length;
      this.wake();
    });
    stream.on("end", () => {
      this.ended = true;
      this.wake();
    });
    stream.on("error", () => {
      this.ended = true;
      this.wake();
    });
  }

  private wake(): void {
    const ws = this.wakeups;
    this.wakeups = [];
    for (const w of ws) w();
  }

  async read(n: number): Promise<Buffer | null> {
    while (this.total < n) {
      if (this.ended) return null;
      await new Promise<void>((resolve) => this.wakeups.push(resolve));
    }
    const buf = Buffer.concat(this.chunks);
    this.chunks = [buf.subarray(n)];
    this.total = buf.length - n;
    return buf.subarray(0, n);
  }
}

export function encodeTensor(t: Tensor): Buffer {
  const header = Buffer.alloc(4 + 4 * t.dims.length);
  header.writeUInt32LE(t.dims.length, 0);
  t.dims.forEach((d, i) => header.writeUInt32LE(d, 4 + 4 * i));
  const payload = Buffer.from(t.data.buffer, t.data.byteOffset, t.data.byteLength);
  return Buffer.concat([header, payload]);
}

export async function readTensor(reader: ByteReader): Promise<Tensor> {
  const head = await reader.read(4);
  if (!head) throw new WireError("stream ended before tensor header");
  const ndim = head.readUInt32LE(0);
  if (ndim === 0 || ndim > MAX_NDIM) throw new WireError(`implausible tensor ndim ${ndim}`);
  const dimsBuf = await reader.read(4 * ndim);
  if (!dimsBuf) throw new WireError("stream ended inside tensor dims");
  const dims: number[] = [];
  let count = 1;
  for (let i = 0; i < ndim; i++) {
    const d = dimsBuf.readUInt32LE(4 * i);
    if (d === 0) throw new WireError("zero-sized tensor dimension");
    dims.push(d);
    count *= d;
  }
  if (count > MAX_ELEMS) throw new WireError(`implausible tensor size ${dims}`);
  const payload = await reader.read(4 * count);
  if (!payload) throw new WireError("stream ended inside tensor payload");
  // Copy so the Float32Array is aligned and owns its bytes.
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) data[i] = payload.readFloatLE(4 * i);
  return { dims, data };
}

export function encodeHandshake(): Buffer {
  const buf = Buffer.alloc(8);
  buf.write(HANDSHAKE_MAGIC, 0, "ascii");
  buf.writeUInt32LE(PROTOCOL_VERSION, 4);
  return buf;
}

export function encodeOkResponse(t: Tensor): Buffer {
  return Buffer.concat([Buffer.from([0]), encodeTensor(t)]);
}

export function encodeErrorResponse(status: number, message: string): Buffer {
  const msg = Buffer.from(message, "utf-8");
  const head = Buffer.alloc(5);
  head.writeUInt8(status, 0);
  head.writeUInt32LE(msg.length, 1);
  return Buffer.concat([head, msg]);
}

export interface Request {
  opcode: number;
  tensors: Tensor[];
}

/** Read one request frame; null at clean EOF before any byte. */
export async function readRequest(reader: ByteReader): Promise<Request | null> {
  const magic = await reader.read(4);
  if (!magic) return null;
  if (magic.toString("ascii") !== REQUEST_MAGIC) {
    throw new WireError(`bad request magic ${JSON.stringify(magic.toString("latin1"))}`);
  }
  const head = await reader.read(2);
  if (!head) throw new WireError("stream ended inside request header");
  const opcode = head.readUInt8(0);
  const nTensors = head.readUInt8(1);
  const tensors: Tensor[] = [];
  for (let i = 0; i < nTensors; i++) tensors.push(await readTensor(reader));
  return { opcode, tensors };
}

export function encodeRequest(req: Request): Buffer {
  const parts: Buffer[] = [
    Buffer.from(REQUEST_MAGIC, "ascii"),
    Buffer.from([req.opcode, req.tensors.length]),
  ];
  for (const t of req.tensors) parts.push(encodeTensor(t));
  return Buffer.concat(parts);
}

/**
 * Validate a recorded byte transcript against the wire grammar.
 * clientBytes must parse as a whole number of requests; serverBytes as a
 * handshake plus one response per request. Returns the number of exchanges.
 */
export function validateTranscript(clientBytes: Buffer, serverBytes: Buffer): number {
  let co = 0;
  const requests: Request[] = [];
  const readU32 = (b: Buffer, at: number) => b.readUInt32LE(at);
  const parseTensor = (b: Buffer, at: number): [Tensor, number] => {
    const ndim = readU32(b, at);
    if (ndim === 0 || ndim > MAX_NDIM) throw new WireError(`transcript: bad ndim ${ndim}`);
    let off = at + 4;
    const dims: number[] = [];
    let count = 1;
    for (let i = 0; i < ndim; i++) {
      dims.push(readU32(b, off));
      count *= dims[i];
      off += 4;
    }
    const data = new Float32Array(count);
    for (let i = 0; i < count; i++) data[i] = b.readFloatLE(off + 4 * i);
    return [{ dims, data }, off + 4 * count];
  };

  while (co < clientBytes.length) {
    if (clientBytes.subarray(co, co + 4).toString("ascii") !== REQUEST_MAGIC) {
      throw new WireError("transcript: bad request magic");
    }
    const opcode = clientBytes.readUInt8(co + 4);
    const n = clientBytes.readUInt8(co + 5);
    let off = co + 6;
    const tensors: Tensor[] = [];
    for (let i = 0; i < n; i++) {
      const [t, next] = parseTensor(clientBytes, off);
      tensors.push(t);
      off = next;
    }
    requests.push({ opcode, tensors });
    co = off;
  }

  if (serverBytes.subarray(0, 4).toString("ascii") !== HANDSHAKE_MAGIC) {
    throw new WireError("transcript: bad handshake magic");
  }
  if (readU32(serverBytes, 4) !== PROTOCOL_VERSION) {
    throw new WireError("transcript: bad protocol version");
  }
  let so = 8;
  let responses = 0;
  while (so < serverBytes.length) {
    const status = serverBytes.readUInt8(so);
    if (status === 0) {
      const [, next] = parseTensor(serverBytes, so + 1);
      so = next;
    } else {
      const len = readU32(serverBytes, so + 1);
      so = so + 5 + len;
    }
    responses += 1;
  }
  if (so !== serverBytes.length) throw new WireError("transcript: trailing server bytes");
  if (responses !== requests.length) {
    throw new WireError(`transcript: ${requests.length} requests but ${responses} responses`);
  }
  return responses;
}
