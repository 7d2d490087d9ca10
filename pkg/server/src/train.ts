/**
 * Desk-scale trainer for the toy refiner.
 *
 *   node dist/train.js --data <fixtures dir> --out model.json \
 *        [--classes 5] [--epochs 3] [--seed 7] [--patch 32] [--per-image 4]
 *
 * Uses SGD with momentum 0.9 and cross-entropy on one-hot targets;
 * epochs 0 just saves the seeded initialization. Exits nonzero if the
 * final loss is not finite.
 */
import * as fs from "fs";
import * as tf from "@tensorflow/tfjs";
import { buildSamples } from "./data";
import { buildRefiner, saveModel, ModelSpec } from "./model";

export interface TrainOptions {
  dataDir: string;
  outFile: string;
  classes: number;
  epochs: number;
  seed: number;
  patch: number;
  perImage: number;
  learningRate: number;
}

export async function trainToy(opts: TrainOptions): Promise<number> {
  const spec: ModelSpec = { classes: opts.classes, seed: opts.seed };
  const model = buildRefiner(spec);
  let finalLoss = NaN;
  if (opts.epochs > 0) {
    const { inputs, targets } = buildSamples(
      opts.dataDir, opts.classes, opts.patch, opts.perImage, opts.seed,
    );
    model.compile({
      optimizer: tf.train.momentum(opts.learningRate, 0.9),
      loss: "categoricalCrossentropy",
    });
    const history = await model.fit(inputs, targets, {
      epochs: opts.epochs,
      batchSize: 8,
      shuffle: false, // keep runs reproducible for a fixed seed
      verbose: 0,
    });
    const losses = history.history.loss as number[];
    finalLoss = losses[losses.length - 1];
    inputs.dispose();
    targets.dispose();
    if (!Number.isFinite(finalLoss)) {
      throw new Error(`training diverged: final loss ${finalLoss}`);
    }
  }
  fs.writeFileSync(opts.outFile, JSON.stringify(saveModel(model, spec)));
  return finalLoss;
}

function parseArgs(argv: string[]): TrainOptions {
  const get = (flag: string, fallback?: string): string | undefined => {
    const i = argv.indexOf(flag);
    return i >= 0 ? argv[i + 1] : fallback;
  };
  const dataDir = get("--data");
  const outFile = get("--out");
  if (!dataDir || !outFile) {
    throw new Error("usage: train --data <fixtures dir> --out <model.json> [options]");
  }
  return {
    dataDir,
    outFile,
    classes: Number(get("--classes", "5")),
    epochs: Number(get("--epochs", "3")),
    seed: Number(get("--seed", "7")),
    patch: Number(get("--patch", "16")),
    perImage: Number(get("--per-image", "6")),
    learningRate: Number(get("--lr", "0.2")),
  };
}

if (require.main === module) {
  trainToy(parseArgs(process.argv.slice(2)))
    .then((loss) => {
      console.error(`final loss: ${loss}`);
    })
    .catch((err) => {
      console.error(String(err));
      process.exit(1);
    });
}
