/**
 * Deterministic text embeddings from character n-grams.
 *
 * Each class name is lower-cased, wrapped in boundary markers, and split
 * into 1- to 3-grams. Every gram is hashed twice: once to pick a
 * coordinate, once to pick a sign. The result is L2-normalized, so
 * identical names always give identical unit vectors and distinct names
 * almost surely give distinct directions.
 */

import { fnv1a, normalize } from './hashing';

export interface TextEncoderOptions {
  dim: number;
  /** n-gram sizes to accumulate; default [1, 2, 3]. */
  gramSizes?: number[];
}

export function encodeClassName(name: string, opts: TextEncoderOptions): Float64Array {
  const { dim, gramSizes = [1, 2, 3] } = opts;
  if (!Number.isInteger(dim) || dim < 2) {
    throw new Error(`dim must be an integer >= 2, got ${dim}`);
  }
  const text = `^${name.trim().toLowerCase()}$`;
  const vec = new Float64Array(dim);
  for (const n of gramSizes) {
    for (let i = 0; i + n <= text.length; i++) {
      const gram = text.slice(i, i + n);
      const idx = fnv1a(`idx:${n}:${gram}`) % dim;
      const sign = fnv1a(`sign:${n}:${gram}`) % 2 === 0 ? 1 : -1;
      vec[idx] += sign / n;
    }
  }
  return normalize(vec);
}

export interface AnchorRecord {
  class: string;
  embedding: number[];
}

export function encodeClassNames(names: string[], opts: TextEncoderOptions): AnchorRecord[] {
  const seen = new Set<string>();
  return names.map((name) => {
    const key = name.trim();
    if (key === '') throw new Error('empty class name');
    if (seen.has(key)) throw new Error(`duplicate class name: ${key}`);
    seen.add(key);
    return { class: key, embedding: Array.from(encodeClassName(key, opts)) };
  });
}
