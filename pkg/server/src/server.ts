/**
 * Reference inference server speaking the framed stdio protocol.
 *
 *   node dist/server.js --mode identity                  # echo first tensor
 *   node dist/server.js --mode passthrough               # echo last tensor
 *   node dist/server.js --mode model --model model.json  # toy refiner combine
 *
 * One request is in flight at a time. Protocol violations are answered
 * with a nonzero status and a message; since the stream can no longer be
 * trusted afterwards, the process then exits with code 1. All logging
 * goes to stderr - stdout carries only protocol bytes.
 */
import * as fs from "fs";
import {
  ByteReader,
  OP_COMBINE,
  OP_SEGMENT,
  Request,
  Tensor,
  WireError,
  encodeErrorResponse,
  encodeHandshake,
  encodeOkResponse,
  readRequest,
} from "./wire";

type Handler = (req: Request) => Tensor;

const STATUS_BAD_REQUEST = 1;
const STATUS_UNSUPPORTED = 3;
const STATUS_INTERNAL = 5;

function identityHandler(req: Request): Tensor {
  if (req.tensors.length < 1) throw new WireError("identity mode needs at least one tensor");
  return req.tensors[0];
}

function passthroughHandler(req: Request): Tensor {
  if (req.tensors.length < 1) throw new WireError("passthrough mode needs at least one tensor");
  return req.tensors[req.tensors.length - 1];
}

function write(buf: Buffer): Promise<void> {
  return new Promise((resolve, reject) => {
    process.stdout.write(buf, (err) => (err ? reject(err) : resolve()));
  });
}

function parseArgs(argv: string[]): { mode: string; modelFile?: string } {
  const get = (flag: string): string | undefined => {
    const i = argv.indexOf(flag);
    return i >= 0 ? argv[i + 1] : undefined;
  };
  return { mode: get("--mode") ?? "identity", modelFile: get("--model") };
}

async function makeModelHandler(modelFile: string): Promise<Handler> {
  // Lazy import keeps identity/passthrough start-up instant.
  const tf = await import("@tensorflow/tfjs");
  const { loadModel, combineWith } = await import("./model.js");
  const saved = JSON.parse(fs.readFileSync(modelFile, "utf-8"));
  const model = loadModel(saved);
  const classes: number = saved.spec.classes;
  tf.engine(); // force backend init before the first request
  return (req: Request): Tensor => {
    if (req.opcode !== OP_COMBINE) {
      throw new UnsupportedError(
        `model mode serves combine (opcode ${OP_COMBINE}) only, got ${req.opcode}`,
      );
    }
    if (req.tensors.length !== 2) {
      throw new WireError(`combine needs 2 tensors, got ${req.tensors.length}`);
    }
    const [y, o] = req.tensors;
    if (y.dims.length !== 3 || o.dims.length !== 3) {
      throw new WireError("combine tensors must be (H, W, C)");
    }
    if (y.dims.join("x") !== o.dims.join("x")) {
      throw new WireError(`tensor dims disagree: ${y.dims} vs ${o.dims}`);
    }
    const [h, w, c] = y.dims;
    if (c !== classes) {
      throw new WireError(`model expects ${classes} classes, request has ${c}`);
    }
    const out = combineWith(model, classes, h, w, y.data, o.data);
    return { dims: [h, w, c], data: out };
  };
}

class UnsupportedError extends Error {}

export async function serve(argv: string[]): Promise<number> {
  const { mode, modelFile } = parseArgs(argv);
  let handler: Handler;
  if (mode === "identity") {
    handler = identityHandler;
  } else if (mode === "passthrough") {
    handler = passthroughHandler;
  } else if (mode === "model") {
    if (!modelFile) {
      console.error("model mode needs --model <file>");
      return 2;
    }
    handler = await makeModelHandler(modelFile);
  } else {
    console.error(`unknown mode ${mode}`);
    return 2;
  }

  const reader = new ByteReader(process.stdin);
  await write(encodeHandshake());

  for (;;) {
    let request: Request | null;
    try {
      request = await readRequest(reader);
    } catch (err) {
      // Framing is lost; answer and stop.
      await write(encodeErrorResponse(STATUS_BAD_REQUEST, String(err)));
      return 1;
    }
    if (request === null) return 0; // clean EOF

    if (request.opcode !== OP_SEGMENT && request.opcode !== OP_COMBINE) {
      await write(encodeErrorResponse(STATUS_UNSUPPORTED, `unknown opcode ${request.opcode}`));
      continue;
    }
    try {
      const out = handler(request);
      await write(encodeOkResponse(out));
    } catch (err) {
      const status = err instanceof UnsupportedError ? STATUS_UNSUPPORTED : STATUS_INTERNAL;
      await write(encodeErrorResponse(status, String(err)));
    }
  }
}

if (require.main === module) {
  serve(process.argv.slice(2)).then(
    (code) => process.exit(code),
    (err) => {
      console.error(String(err));
      process.exit(1);
    },
  );
}
