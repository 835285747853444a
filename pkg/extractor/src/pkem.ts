/**
 * PKEM embedding-file format (little-endian):
 *   magic "PKEM" | version u32 = 1 | n u32 | d u32 | numClasses u32
 *   then n records: id u64 | label u32 | cleanLabel u32 | d x float32
 * A cleanLabel of 0xFFFFFFFF means "unknown".
 */
import * as fs from 'fs'
import * as path from 'path'

export const PKEM_MAGIC = 'PKEM'
export const PKEM_VERSION = 1
export const CLEAN_UNKNOWN = 0xffffffff

export interface PkemRecord {
  id: bigint
  label: number
  cleanLabel: number // CLEAN_UNKNOWN when not verified
  features: Float32Array
}

export function encodePkem(records: PkemRecord[], featureDim: number, numClasses: number): Buffer {
  for (const r of records) {
    if (r.features.length !== featureDim) {
      throw new Error(
        `record ${r.id}: feature length ${r.features.length} does not match d=${featureDim}`,
      )
    }
    if (r.label < 0 || r.label >= numClasses) {
      throw new Error(`record ${r.id}: label ${r.label} out of range for ${numClasses} classes`)
    }
  }
  const recordSize = 8 + 4 + 4 + 4 * featureDim
  const buf = Buffer.alloc(20 + records.length * recordSize)
  buf.write(PKEM_MAGIC, 0, 'ascii')
  buf.writeUInt32LE(PKEM_VERSION, 4)
  buf.writeUInt32LE(records.length, 8)
  buf.writeUInt32LE(featureDim, 12)
  buf.writeUInt32LE(numClasses, 16)
  let off = 20
  for (const r of records) {
    buf.writeBigUInt64LE(r.id, off)
    buf.writeUInt32LE(r.label, off + 8)
    buf.writeUInt32LE(r.cleanLabel >>> 0, off + 12)
    let foff = off + 16
    for (let i = 0; i < featureDim; i++) {
      buf.writeFloatLE(r.features[i], foff)
      foff += 4
    }
    off += recordSize
  }
  return buf
}

/** Parse a PKEM buffer; used by the extractor's own tests. */
export function decodePkem(buf: Buffer): {
  n: number
  featureDim: number
  numClasses: number
  records: PkemRecord[]
} {
  if (buf.length < 20 || buf.toString('ascii', 0, 4) !== PKEM_MAGIC) {
    throw new Error('not a PKEM buffer')
  }
  const version = buf.readUInt32LE(4)
  if (version !== PKEM_VERSION) throw new Error(`unsupported PKEM version ${version}`)
  const n = buf.readUInt32LE(8)
  const featureDim = buf.readUInt32LE(12)
  const numClasses = buf.readUInt32LE(16)
  const recordSize = 16 + 4 * featureDim
  if (buf.length !== 20 + n * recordSize) {
    throw new Error(`payload is ${buf.length - 20} bytes, expected ${n * recordSize}`)
  }
  const records: PkemRecord[] = []
  let off = 20
  for (let r = 0; r < n; r++) {
    const features = new Float32Array(featureDim)
    for (let i = 0; i < featureDim; i++) features[i] = buf.readFloatLE(off + 16 + 4 * i)
    records.push({
      id: buf.readBigUInt64LE(off),
      label: buf.readUInt32LE(off + 8),
      cleanLabel: buf.readUInt32LE(off + 12),
      features,
    })
    off += recordSize
  }
  return { n, featureDim, numClasses, records }
}

/** Write via a temp file in the same directory, then rename into place. */
export function writeFileAtomic(outPath: string, data: Buffer): void {
  const dir = path.dirname(outPath)
  fs.mkdirSync(dir, { recursive: true })
  const tmp = path.join(dir, `.${path.basename(outPath)}.tmp-${process.pid}`)
  fs.writeFileSync(tmp, data)
  fs.renameSync(tmp, outPath)
}
