/**
 * Local backbone loading. A backbone is a saved tfjs LayersModel directory
 * (model.json + weights.bin); features are read from its penultimate layer
 * (or any named layer), so the feature dimension is whatever that layer
 * produces.
 */
import * as fs from 'fs'
import * as path from 'path'
import * as tf from '@tensorflow/tfjs'

export interface Backbone {
  inputSize: number
  featureDim: number
  /** Embed a [n, size, size, 3] batch into [n, featureDim] features. */
  embed(batch: tf.Tensor4D): tf.Tensor2D
  dispose(): void
}

/** Minimal file:// stand-in: read model.json + binary weight shards. */
export function fileLoadHandler(modelDir: string): tf.io.IOHandler {
  return {
    load: async () => {
      const manifestPath = path.join(modelDir, 'model.json')
      if (!fs.existsSync(manifestPath)) {
        throw new Error(`backbone not found: ${manifestPath}`)
      }
      const manifest = JSON.parse(fs.readFileSync(manifestPath, 'utf-8'))
      const weightSpecs: tf.io.WeightsManifestEntry[] = []
      const buffers: Buffer[] = []
      for (const group of manifest.weightsManifest) {
        weightSpecs.push(...group.weights)
        for (const rel of group.paths) {
          buffers.push(fs.readFileSync(path.join(modelDir, rel)))
        }
      }
      const weightData = new Uint8Array(Buffer.concat(buffers)).buffer
      return {
        modelTopology: manifest.modelTopology,
        weightSpecs,
        weightData,
      } as tf.io.ModelArtifacts
    },
  }
}

export function fileSaveHandler(modelDir: string): tf.io.IOHandler {
  return {
    save: async (artifacts: tf.io.ModelArtifacts) => {
      fs.mkdirSync(modelDir, { recursive: true })
      const weightData = artifacts.weightData as ArrayBuffer
      fs.writeFileSync(path.join(modelDir, 'weights.bin'), Buffer.from(weightData))
      const manifest = {
        modelTopology: artifacts.modelTopology,
        weightsManifest: [{ paths: ['weights.bin'], weights: artifacts.weightSpecs }],
      }
      fs.writeFileSync(path.join(modelDir, 'model.json'), JSON.stringify(manifest))
      return {
        modelArtifactsInfo: {
          dateSaved: new Date(),
          modelTopologyType: 'JSON' as const,
        },
      }
    },
  }
}

/**
 * Load a backbone and truncate it at the feature layer. By default the
 * penultimate layer is used (the one feeding the final prediction head).
 */
export async function loadBackbone(
  modelDir: string,
  featureLayerName?: string,
): Promise<Backbone> {
  const model = await tf.loadLayersModel(fileLoadHandler(modelDir))
  if (model.layers.length < 2) {
    throw new Error('backbone must have at least two layers')
  }
  const layer = featureLayerName
    ? model.getLayer(featureLayerName)
    : model.layers[model.layers.length - 2]
  const trunk = tf.model({
    inputs: model.inputs,
    outputs: layer.output as tf.SymbolicTensor,
  })
  const outShape = trunk.outputs[0].shape
  if (outShape.length !== 2 || outShape[1] === null) {
    throw new Error(
      `feature layer '${layer.name}' must produce a flat [batch, d] output, got ${outShape}`,
    )
  }
  const inShape = trunk.inputs[0].shape
  return {
    inputSize: inShape[1] as number,
    featureDim: outShape[1] as number,
    embed: (batch: tf.Tensor4D) => trunk.predict(batch) as tf.Tensor2D,
    dispose: () => trunk.dispose(),
  }
}
