/**
 * CLI entry points:
 *   extract  --dataset DIR --backbone DIR --out FILE [--batch-size N]
 *            [--split TAG] [--layer NAME] [--expected-dim D]
 *   make-toy --dir DIR [--count N] [--classes C] [--size S] [--feature-dim D]
 */
import { extract } from './extract'
import { makeToyBackbone, makeToyDataset } from './toy'

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>()
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i]
    if (!key.startsWith('--') || i + 1 >= argv.length) {
      throw new Error(`malformed arguments near '${key}'`)
    }
    flags.set(key.slice(2), argv[i + 1])
  }
  return flags
}

function required(flags: Map<string, string>, name: string): string {
  const value = flags.get(name)
  if (value === undefined) throw new Error(`missing required flag --${name}`)
  return value
}

async function main(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2)
  if (command === 'extract') {
    const flags = parseFlags(rest)
    const summary = await extract({
      datasetDir: required(flags, 'dataset'),
      backboneDir: required(flags, 'backbone'),
      outPath: required(flags, 'out'),
      batchSize: flags.has('batch-size') ? Number(flags.get('batch-size')) : undefined,
      splitTag: flags.get('split'),
      featureLayerName: flags.get('layer'),
      expectedDim: flags.has('expected-dim') ? Number(flags.get('expected-dim')) : undefined,
    })
    console.log(JSON.stringify(summary))
    return 0
  }
  if (command === 'make-toy') {
    const flags = parseFlags(rest)
    const dir = required(flags, 'dir')
    const numClasses = flags.has('classes') ? Number(flags.get('classes')) : 2
    makeToyDataset(`${dir}/images`, {
      count: flags.has('count') ? Number(flags.get('count')) : 10,
      numClasses,
      size: flags.has('size') ? Number(flags.get('size')) : 16,
    })
    await makeToyBackbone(`${dir}/backbone`, {
      inputSize: flags.has('size') ? Number(flags.get('size')) : 16,
      featureDim: flags.has('feature-dim') ? Number(flags.get('feature-dim')) : 8,
      numClasses,
    })
    console.log(JSON.stringify({ images: `${dir}/images`, backbone: `${dir}/backbone` }))
    return 0
  }
  console.error('usage: extract|make-toy [flags]; see extractor/README.md')
  return 1
}

main()
  .then((code) => process.exit(code))
  .catch((err) => {
    console.error(String(err && err.message ? err.message : err))
    process.exit(1)
  })
