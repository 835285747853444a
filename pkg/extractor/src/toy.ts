/**
 * Toy fixtures: a tiny seeded CNN backbone saved in the local model
 * format, and a small procedurally-generated PNG dataset. These stand in
 * for a real pretrained backbone in tests and smoke runs; any saved
 * LayersModel directory works the same way.
 */
import * as path from 'path'
import * as tf from '@tensorflow/tfjs'

import { fileSaveHandler } from './backbone'
import { writePngRgb } from './dataset'

export interface ToyBackboneOptions {
  inputSize?: number
  featureDim?: number
  numClasses?: number
  seed?: number
}

export async function makeToyBackbone(
  modelDir: string,
  opts: ToyBackboneOptions = {},
): Promise<void> {
  const inputSize = opts.inputSize ?? 16
  const featureDim = opts.featureDim ?? 8
  const numClasses = opts.numClasses ?? 3
  const seed = opts.seed ?? 7
  const model = tf.sequential()
  model.add(
    tf.layers.conv2d({
      inputShape: [inputSize, inputSize, 3],
      filters: 4,
      kernelSize: 3,
      activation: 'relu',
      kernelInitializer: tf.initializers.glorotUniform({ seed }),
      biasInitializer: 'zeros',
    }),
  )
  model.add(tf.layers.maxPooling2d({ poolSize: 2 }))
  model.add(tf.layers.flatten())
  model.add(
    tf.layers.dense({
      units: featureDim,
      activation: 'relu',
      name: 'penultimate',
      kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 1 }),
      biasInitializer: 'zeros',
    }),
  )
  model.add(
    tf.layers.dense({
      units: numClasses,
      name: 'head',
      kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 2 }),
      biasInitializer: 'zeros',
    }),
  )
  await model.save(fileSaveHandler(modelDir))
  model.dispose()
}

/** Deterministic xorshift so the toy images never depend on Math.random. */
function makeRng(seed: number): () => number {
  let state = seed >>> 0 || 1
  return () => {
    state ^= state << 13
    state >>>= 0
    state ^= state >> 17
    state ^= state << 5
    state >>>= 0
    return state / 0xffffffff
  }
}

export interface ToyDatasetOptions {
  count?: number
  numClasses?: number
  size?: number
  seed?: number
}

/** Write `count` PNGs into class subdirectories; class drives the hue. */
export function makeToyDataset(root: string, opts: ToyDatasetOptions = {}): string[] {
  const count = opts.count ?? 10
  const numClasses = opts.numClasses ?? 2
  const size = opts.size ?? 16
  const rng = makeRng(opts.seed ?? 3)
  const written: string[] = []
  for (let i = 0; i < count; i++) {
    const label = i % numClasses
    const pixels = new Uint8Array(size * size * 3)
    for (let p = 0; p < size * size; p++) {
      const noise = rng() * 80
      pixels[p * 3] = Math.min(255, (label === 0 ? 160 : 30) + noise)
      pixels[p * 3 + 1] = Math.min(255, 40 + noise)
      pixels[p * 3 + 2] = Math.min(255, (label === 0 ? 30 : 160) + noise)
    }
    const file = path.join(root, `class_${label}`, `img_${String(i).padStart(3, '0')}.png`)
    writePngRgb(file, pixels, size, size)
    written.push(file)
  }
  return written
}
