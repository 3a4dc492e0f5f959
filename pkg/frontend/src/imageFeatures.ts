/**
 * Image directory -> feature vectors.
 *
 * The directory layout is one subdirectory per class; each PNG inside
 * becomes one sample labelled by its class index (subdirectories in
 * lexicographic order). Per image we compute a raw descriptor -- per
 * channel mean and standard deviation plus a 4x4 average-luminance grid
 * -- and project it to the requested dimension with a fixed Gaussian
 * projection, so the output depends only on the pixel data.
 */

import { readdirSync, readFileSync, statSync } from 'node:fs';
import { join } from 'node:path';

import { normalize, project } from './hashing';
import { decodePng, DecodedImage } from './png';

const GRID = 4;

export function imageDescriptor(img: DecodedImage): Float64Array {
  const { width, height, channels, pixels } = img;
  const colorChannels = Math.min(channels, 3);
  const out = new Float64Array(2 * 3 + GRID * GRID);

  for (let c = 0; c < 3; c++) {
    const src = Math.min(c, colorChannels - 1); // grayscale reuses channel 0
    let sum = 0;
    let sq = 0;
    const n = width * height;
    for (let i = 0; i < n; i++) {
      const v = pixels[i * channels + src] / 255;
      sum += v;
      sq += v * v;
    }
    const mean = sum / n;
    out[2 * c] = mean;
    out[2 * c + 1] = Math.sqrt(Math.max(0, sq / n - mean * mean));
  }

  const cellSum = new Float64Array(GRID * GRID);
  const cellCount = new Float64Array(GRID * GRID);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      let luma = 0;
      for (let c = 0; c < colorChannels; c++) {
        luma += pixels[(y * width + x) * channels + c];
      }
      luma /= colorChannels * 255;
      const cell =
        Math.min(GRID - 1, Math.floor((y * GRID) / height)) * GRID +
        Math.min(GRID - 1, Math.floor((x * GRID) / width));
      cellSum[cell] += luma;
      cellCount[cell] += 1;
    }
  }
  for (let i = 0; i < GRID * GRID; i++) {
    out[6 + i] = cellCount[i] > 0 ? cellSum[i] / cellCount[i] : 0;
  }
  return out;
}

export function imageFeature(data: Buffer, dim: number): Float64Array {
  return normalize(project(imageDescriptor(decodePng(data)), dim));
}

export interface FeatureRecord {
  label: number;
  feature: number[];
}

export interface DirectoryExport {
  classNames: string[];
  records: FeatureRecord[];
}

export function exportDirectory(root: string, dim: number): DirectoryExport {
  const classNames = readdirSync(root)
    .filter((name) => statSync(join(root, name)).isDirectory())
    .sort();
  if (classNames.length === 0) {
    throw new Error(`no class subdirectories under ${root}`);
  }
  const perClass: FeatureRecord[][] = classNames.map((cls, label) => {
    const files = readdirSync(join(root, cls))
      .filter((f) => f.toLowerCase().endsWith('.png'))
      .sort();
    if (files.length === 0) {
      throw new Error(`class directory ${cls} contains no .png files`);
    }
    return files.map((file) => {
      const feature = imageFeature(readFileSync(join(root, cls, file)), dim);
      return { label, feature: Array.from(feature) };
    });
  });
  // Interleave classes so any prefix/suffix split still covers them all.
  const records: FeatureRecord[] = [];
  const longest = Math.max(...perClass.map((r) => r.length));
  for (let i = 0; i < longest; i++) {
    for (const rows of perClass) {
      if (i < rows.length) records.push(rows[i]);
    }
  }
  return { classNames, records };
}
