/**
 * Toy refinement network: merges the cumulative and scale-local probability
 * maps into one. Two residual blocks around 3x3 convolutions, taking the
 * concatenated (H, W, 2C) input to a softmax over C classes. Spatial dims
 * stay free so one model serves any patch size.
 *
 * Weights persist as plain JSON (shape + base64 float32), which keeps the
 * server free of any framework-specific storage handler.
 */
import * as tf from "@tensorflow/tfjs";

export interface ModelSpec {
  classes: number;
  seed: number;
}

export interface SavedModel {
  spec: ModelSpec;
  weights: Array<{ shape: number[]; data: string }>;
}

function conv(channels: number, kernel: number, seed: number, name: string) {
  return tf.layers.conv2d({
    filters: channels,
    kernelSize: kernel,
    padding: "same",
    kernelInitializer: tf.initializers.glorotUniform({ seed }),
    biasInitializer: "zeros",
    name,
  });
}

export function buildRefiner(spec: ModelSpec): tf.LayersModel {
  // The residual trunk keeps the 2C input width, so at initialization it is
  // close to the identity and the 1x1 head only has to learn how to mix the
  // two stacked probability maps. That keeps desk-scale training short.
  const width = 2 * spec.classes;
  const input = tf.input({ shape: [null, null, width] });
  let x = input as tf.SymbolicTensor;
  for (let i = 0; i < 2; i++) {
    let y = conv(width, 3, spec.seed + 1 + 2 * i, `res${i}_a`).apply(x) as tf.SymbolicTensor;
    y = tf.layers.reLU().apply(y) as tf.SymbolicTensor;
    y = conv(width, 3, spec.seed + 2 + 2 * i, `res${i}_b`).apply(y) as tf.SymbolicTensor;
    x = tf.layers.add().apply([x, y]) as tf.SymbolicTensor;
    x = tf.layers.reLU().apply(x) as tf.SymbolicTensor;
  }
  let out = conv(spec.classes, 1, spec.seed + 9, "head").apply(x) as tf.SymbolicTensor;
  out = tf.layers.softmax({ axis: -1 }).apply(out) as tf.SymbolicTensor;
  const model = tf.model({ inputs: input, outputs: out });

  // Head starts as "sum both maps per class, sharpened": with the trunk
  // near identity the untrained module already behaves like an averaging
  // combiner, and training only has to refine from there.
  const head = model.getLayer("head");
  const bias = head.getWeights()[1];
  const init = new Float32Array(width * spec.classes);
  for (let c = 0; c < spec.classes; c++) {
    init[c * spec.classes + c] = 2.0;
    init[(spec.classes + c) * spec.classes + c] = 2.0;
  }
  head.setWeights([tf.tensor4d(init, [1, 1, width, spec.classes]), bias]);
  return model;
}

export function saveModel(model: tf.LayersModel, spec: ModelSpec): SavedModel {
  const weights = model.getWeights().map((w) => {
    const data = w.dataSync() as Float32Array;
    return {
      shape: w.shape.slice(),
      data: Buffer.from(data.buffer, data.byteOffset, data.byteLength).toString("base64"),
    };
  });
  return { spec, weights };
}

export function loadModel(saved: SavedModel): tf.LayersModel {
  const model = buildRefiner(saved.spec);
  const tensors = saved.weights.map((w) => {
    const raw = Buffer.from(w.data, "base64");
    const data = new Float32Array(raw.buffer.slice(raw.byteOffset, raw.byteOffset + raw.byteLength));
    return tf.tensor(data, w.shape);
  });
  model.setWeights(tensors);
  tensors.forEach((t) => t.dispose());
  return model;
}

/**
 * Combine two flat (H, W, C) maps through the network. Inputs and output
 * are row-major Float32Arrays; the output sums to one per pixel by
 * construction (softmax head).
 */
export function combineWith(
  model: tf.LayersModel,
  classes: number,
  h: number,
  w: number,
  cumulative: Float32Array,
  local: Float32Array,
): Float32Array {
  return tf.tidy(() => {
    const y = tf.tensor4d(cumulative, [1, h, w, classes]);
    const o = tf.tensor4d(local, [1, h, w, classes]);
    const merged = tf.concat([y, o], 3);
    const out = model.predict(merged) as tf.Tensor;
    return out.dataSync() as Float32Array;
  });
}
