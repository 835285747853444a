/**
 * Image-folder datasets: one subdirectory per class, PNG images inside.
 * Class indices follow the sorted subdirectory names; ids enumerate the
 * dataset order (classes sorted, files sorted within a class), so a
 * re-scan of an unchanged folder always yields the same ids and labels.
 */
import * as fs from 'fs'
import * as path from 'path'
import { PNG } from 'pngjs'

export interface LabeledImage {
  id: bigint
  filePath: string
  label: number
  className: string
}

export interface ImageFolder {
  images: LabeledImage[]
  classNames: string[]
}

export function scanImageFolder(root: string): ImageFolder {
  if (!fs.existsSync(root) || !fs.statSync(root).isDirectory()) {
    throw new Error(`dataset directory not found: ${root}`)
  }
  const classNames = fs
    .readdirSync(root)
    .filter((name) => fs.statSync(path.join(root, name)).isDirectory())
    .sort()
  if (classNames.length === 0) {
    throw new Error(`dataset directory has no class subdirectories: ${root}`)
  }
  const images: LabeledImage[] = []
  let nextId = 0n
  classNames.forEach((className, label) => {
    const dir = path.join(root, className)
    const files = fs
      .readdirSync(dir)
      .filter((f) => f.toLowerCase().endsWith('.png'))
      .sort()
    for (const file of files) {
      images.push({ id: nextId, filePath: path.join(dir, file), label, className })
      nextId += 1n
    }
  })
  if (images.length === 0) {
    throw new Error(`dataset directory contains no .png images: ${root}`)
  }
  return { images, classNames }
}

/** Decode a PNG to row-major RGB floats in [0, 1]. */
export function decodePngRgb(filePath: string): {
  data: Float32Array
  width: number
  height: number
} {
  const png = PNG.sync.read(fs.readFileSync(filePath))
  const { width, height, data } = png
  const out = new Float32Array(width * height * 3)
  for (let p = 0; p < width * height; p++) {
    out[p * 3] = data[p * 4] / 255
    out[p * 3 + 1] = data[p * 4 + 1] / 255
    out[p * 3 + 2] = data[p * 4 + 2] / 255
  }
  return { data: out, width, height }
}

export function writePngRgb(
  filePath: string,
  pixels: Uint8Array,
  width: number,
  height: number,
): void {
  const png = new PNG({ width, height })
  for (let p = 0; p < width * height; p++) {
    png.data[p * 4] = pixels[p * 3]
    png.data[p * 4 + 1] = pixels[p * 3 + 1]
    png.data[p * 4 + 2] = pixels[p * 3 + 2]
    png.data[p * 4 + 3] = 255
  }
  fs.mkdirSync(path.dirname(filePath), { recursive: true })
  fs.writeFileSync(filePath, PNG.sync.write(png))
}
