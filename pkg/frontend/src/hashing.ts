/** Deterministic hashing primitives shared by both exporters. */

/** 32-bit FNV-1a over a UTF-8 string. */
export function fnv1a(text: string): number {
  let h = 0x811c9dc5;
  const bytes = Buffer.from(text, 'utf-8');
  for (const b of bytes) {
    h ^= b;
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h >>> 0;
}

/** Small deterministic PRNG (mulberry32); yields floats in [0, 1). */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Standard-normal draw via Box-Muller on a mulberry32 stream. */
export function gaussianStream(seed: number): () => number {
  const uniform = mulberry32(seed);
  let spare: number | null = null;
  return () => {
    if (spare !== null) {
      const v = spare;
      spare = null;
      return v;
    }
    let u = 0;
    while (u === 0) u = uniform();
    const r = Math.sqrt(-2 * Math.log(u));
    const theta = 2 * Math.PI * uniform();
    spare = r * Math.sin(theta);
    return r * Math.cos(theta);
  };
}

/** L2-normalize in place; throws on an all-zero vector. */
export function normalize(vec: Float64Array): Float64Array {
  let sq = 0;
  for (const v of vec) sq += v * v;
  if (sq === 0) throw new Error('cannot normalize a zero vector');
  const inv = 1 / Math.sqrt(sq);
  for (let i = 0; i < vec.length; i++) vec[i] *= inv;
  return vec;
}

/**
 * Project an arbitrary-length vector to `dim` entries with a fixed
 * Gaussian random projection. The projection matrix depends only on
 * (input length, dim), so equal inputs always map to equal outputs.
 */
export function project(input: Float64Array, dim: number): Float64Array {
  const draw = gaussianStream(fnv1a(`proj:${input.length}:${dim}`));
  const out = new Float64Array(dim);
  for (let i = 0; i < input.length; i++) {
    for (let j = 0; j < dim; j++) {
      out[j] += input[i] * draw();
    }
  }
  return out;
}
