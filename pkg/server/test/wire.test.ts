import { PassThrough } from "stream";
import { describe, expect, it } from "vitest";
import { mulberry32 } from "../src/data";
import {
  ByteReader,
  OP_COMBINE,
  Tensor,
  WireError,
  encodeHandshake,
  encodeErrorResponse,
  encodeOkResponse,
  encodeRequest,
  encodeTensor,
  readRequest,
  readTensor,
  validateTranscript,
} from "../src/wire";
import { randomTensor } from "./helpers";

function readerFor(buf: Buffer): ByteReader {
  const stream = new PassThrough();
  const reader = new ByteReader(stream);
  stream.end(buf);
  return reader;
}

describe("tensor codec", () => {
  it("round-trips random tensors bit-exactly", async () => {
    const rand = mulberry32(1);
    for (let i = 0; i < 10; i++) {
      const dims = [1 + Math.floor(rand() * 5), 1 + Math.floor(rand() * 5), 3];
      const t = randomTensor(rand, dims);
      const out = await readTensor(readerFor(encodeTensor(t)));
      expect(out.dims).toEqual(t.dims);
      expect(Buffer.from(out.data.buffer).equals(Buffer.from(t.data.buffer))).toBe(true);
    }
  });

  it("rejects implausible headers", async () => {
    const bad = Buffer.alloc(4);
    bad.writeUInt32LE(4096, 0);
    await expect(readTensor(readerFor(bad))).rejects.toThrow(WireError);
  });

  it("rejects truncated payloads", async () => {
    const t: Tensor = { dims: [2, 2], data: new Float32Array([1, 2, 3, 4]) };
    const cut = encodeTensor(t).subarray(0, 14);
    await expect(readTensor(readerFor(cut))).rejects.toThrow(WireError);
  });
});

describe("request framing", () => {
  it("parses a combine request", async () => {
    const rand = mulberry32(2);
    const y = randomTensor(rand, [3, 4, 2]);
    const o = randomTensor(rand, [3, 4, 2]);
    const req = await readRequest(readerFor(encodeRequest({ opcode: OP_COMBINE, tensors: [y, o] })));
    expect(req).not.toBeNull();
    expect(req!.opcode).toBe(OP_COMBINE);
    expect(req!.tensors).toHaveLength(2);
    expect(req!.tensors[1].dims).toEqual([3, 4, 2]);
  });

  it("returns null at clean EOF", async () => {
    expect(await readRequest(readerFor(Buffer.alloc(0)))).toBeNull();
  });

  it("throws on a bad magic", async () => {
    await expect(readRequest(readerFor(Buffer.from("XXXXaa")))).rejects.toThrow(WireError);
  });
});

describe("transcript validation", () => {
  it("accepts 20 recorded request/response pairs", () => {
    const rand = mulberry32(3);
    const clientParts: Buffer[] = [];
    const serverParts: Buffer[] = [encodeHandshake()];
    for (let i = 0; i < 20; i++) {
      const t = randomTensor(rand, [2 + (i % 3), 2 + (i % 4), 3]);
      clientParts.push(encodeRequest({ opcode: 1, tensors: [t] }));
      if (i % 5 === 4) {
        serverParts.push(encodeErrorResponse(3, "synthetic error"));
      } else {
        serverParts.push(encodeOkResponse(t));
      }
    }
    const n = validateTranscript(Buffer.concat(clientParts), Buffer.concat(serverParts));
    expect(n).toBe(20);
  });

  it("rejects a response count mismatch", () => {
    const rand = mulberry32(4);
    const t = randomTensor(rand, [2, 2, 3]);
    const client = encodeRequest({ opcode: 1, tensors: [t] });
    const server = encodeHandshake(); // no responses at all
    expect(() => validateTranscript(client, server)).toThrow(WireError);
  });

  it("rejects a corrupted handshake", () => {
    const server = Buffer.from("NOPE\x01\x00\x00\x00");
    expect(() => validateTranscript(Buffer.alloc(0), server)).toThrow(WireError);
  });
});
