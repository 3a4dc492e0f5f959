#!/usr/bin/env node
/**
 * embedding-exporter CLI.
 *
 *   export-anchors  --classes cat,dog,... --dim 32 --out anchors.jsonl
 *   export-features --dir images/ --dim 32 --domain 1 --out features.jsonl
 *
 * `export-features` expects one subdirectory per class containing PNG
 * files; labels follow the lexicographic order of the subdirectories.
 */

import { parseArgs } from 'node:util';

import { exportDirectory } from './imageFeatures';
import { anchorJsonl, featureJsonl, writeText } from './jsonl';
import { encodeClassNames } from './textEncoder';

function usage(): string {
  return [
    'usage:',
    '  export-anchors  --classes a,b,c --out FILE [--dim 32]',
    '  export-features --dir DIR --out FILE [--dim 32] [--domain 1]',
  ].join('\n');
}

export function run(argv: string[]): number {
  const [command, ...rest] = argv;
  if (command === 'export-anchors') {
    const { values } = parseArgs({
      args: rest,
      options: {
        classes: { type: 'string' },
        dim: { type: 'string', default: '32' },
        out: { type: 'string' },
      },
    });
    if (!values.classes || !values.out) {
      throw new Error('export-anchors requires --classes and --out');
    }
    const names = values.classes.split(',').map((s) => s.trim()).filter(Boolean);
    const dim = Number(values.dim);
    const records = encodeClassNames(names, { dim });
    writeText(values.out, anchorJsonl(records, dim, 'char-ngram-hash-v1'));
    console.log(`wrote ${records.length} anchors (dim ${dim}) to ${values.out}`);
    return 0;
  }
  if (command === 'export-features') {
    const { values } = parseArgs({
      args: rest,
      options: {
        dir: { type: 'string' },
        dim: { type: 'string', default: '32' },
        domain: { type: 'string', default: '1' },
        out: { type: 'string' },
      },
    });
    if (!values.dir || !values.out) {
      throw new Error('export-features requires --dir and --out');
    }
    const dim = Number(values.dim);
    const { classNames, records } = exportDirectory(values.dir, dim);
    writeText(values.out, featureJsonl(records, dim, Number(values.domain)));
    console.log(
      `wrote ${records.length} features (dim ${dim}) for classes ` +
        `[${classNames.join(', ')}] to ${values.out}`,
    );
    return 0;
  }
  console.error(usage());
  return 2;
}

if (require.main === module) {
  try {
    process.exit(run(process.argv.slice(2)));
  } catch (err) {
    console.error(err instanceof Error ? err.message : String(err));
    process.exit(1);
  }
}
