import { describe, expect, it } from 'vitest';

import { encodeClassName, encodeClassNames } from '../src/textEncoder';

describe('encodeClassName', () => {
  it('is deterministic', () => {
    const a = encodeClassName('airplane', { dim: 32 });
    const b = encodeClassName('airplane', { dim: 32 });
    expect(Array.from(a)).toEqual(Array.from(b));
  });

  it('returns unit vectors', () => {
    for (const name of ['cat', 'dog', 'bird', 'x']) {
      const v = encodeClassName(name, { dim: 48 });
      const norm = Math.sqrt(v.reduce((s, x) => s + x * x, 0));
      expect(norm).toBeCloseTo(1, 12);
    }
  });

  it('is case- and whitespace-insensitive', () => {
    const a = encodeClassName('Cat', { dim: 32 });
    const b = encodeClassName('  cat ', { dim: 32 });
    expect(Array.from(a)).toEqual(Array.from(b));
  });

  it('separates distinct names', () => {
    const a = encodeClassName('cat', { dim: 64 });
    const b = encodeClassName('dog', { dim: 64 });
    let dot = 0;
    for (let i = 0; i < 64; i++) dot += a[i] * b[i];
    expect(Math.abs(dot)).toBeLessThan(0.99);
  });

  it('rejects dim < 2', () => {
    expect(() => encodeClassName('cat', { dim: 1 })).toThrow(/dim/);
  });
});

describe('encodeClassNames', () => {
  it('rejects duplicates and empties', () => {
    expect(() => encodeClassNames(['cat', 'cat'], { dim: 16 })).toThrow(/duplicate/);
    expect(() => encodeClassNames(['cat', '  '], { dim: 16 })).toThrow(/empty/);
  });

  it('keeps the given order', () => {
    const recs = encodeClassNames(['dog', 'cat'], { dim: 16 });
    expect(recs.map((r) => r.class)).toEqual(['dog', 'cat']);
    expect(recs[0].embedding).toHaveLength(16);
  });
});
