/**
 * The extraction pipeline: scan a labeled image folder, push batches
 * through a local backbone, and write penultimate-layer embeddings plus
 * labels as a PKEM file the selection engine can load directly.
 */
import * as path from 'path'
import * as tf from '@tensorflow/tfjs'

import { loadBackbone } from './backbone'
import { decodePngRgb, scanImageFolder } from './dataset'
import { CLEAN_UNKNOWN, PkemRecord, encodePkem, writeFileAtomic } from './pkem'

export interface ExtractionSpec {
  datasetDir: string
  backboneDir: string
  outPath: string
  batchSize?: number
  /** Scan datasetDir/<splitTag> instead of the dataset root. */
  splitTag?: string
  /** Read features from this layer instead of the penultimate one. */
  featureLayerName?: string
  /** Fail fast when the backbone's feature width is not what the caller declared. */
  expectedDim?: number
}

export interface ExtractionSummary {
  n: number
  featureDim: number
  numClasses: number
  classNames: string[]
  labels: number[]
}

export async function extract(spec: ExtractionSpec): Promise<ExtractionSummary> {
  const batchSize = spec.batchSize ?? 32
  if (batchSize < 1) throw new Error('batchSize must be >= 1')
  const root = spec.splitTag ? path.join(spec.datasetDir, spec.splitTag) : spec.datasetDir
  const folder = scanImageFolder(root)
  const backbone = await loadBackbone(spec.backboneDir, spec.featureLayerName)
  try {
    if (spec.expectedDim !== undefined && backbone.featureDim !== spec.expectedDim) {
      throw new Error(
        `backbone feature dim ${backbone.featureDim} does not match declared ${spec.expectedDim}`,
      )
    }
    const size = backbone.inputSize
    const records: PkemRecord[] = []
    for (let start = 0; start < folder.images.length; start += batchSize) {
      const chunk = folder.images.slice(start, start + batchSize)
      const batch = tf.tidy(() => {
        const tensors = chunk.map((img) => {
          const { data, width, height } = decodePngRgb(img.filePath)
          const t = tf.tensor3d(data, [height, width, 3])
          return width === size && height === size
            ? t
            : tf.image.resizeBilinear(t, [size, size])
        })
        return tf.stack(tensors) as tf.Tensor4D
      })
      const features = tf.tidy(() => backbone.embed(batch))
      const values = (await features.data()) as Float32Array
      batch.dispose()
      features.dispose()
      chunk.forEach((img, row) => {
        const slice = values.slice(row * backbone.featureDim, (row + 1) * backbone.featureDim)
        if (!slice.every(Number.isFinite)) {
          throw new Error(`non-finite features for ${img.filePath}`)
        }
        records.push({
          id: img.id,
          label: img.label,
          cleanLabel: CLEAN_UNKNOWN,
          features: slice,
        })
      })
    }
    const buffer = encodePkem(records, backbone.featureDim, folder.classNames.length)
    writeFileAtomic(spec.outPath, buffer)
    return {
      n: records.length,
      featureDim: backbone.featureDim,
      numClasses: folder.classNames.length,
      classNames: folder.classNames,
      labels: records.map((r) => r.label),
    }
  } finally {
    backbone.dispose()
  }
}
