/** JSONL writers for the two export formats. */

import { writeFileSync } from 'node:fs';

import { AnchorRecord } from './textEncoder';
import { FeatureRecord } from './imageFeatures';

/** Header {dim, count, encoder}, then one {class, embedding} per line. */
export function anchorJsonl(records: AnchorRecord[], dim: number, encoder: string): string {
  const lines = [JSON.stringify({ dim, count: records.length, encoder })];
  for (const r of records) {
    lines.push(JSON.stringify({ class: r.class, embedding: r.embedding }));
  }
  return lines.join('\n') + '\n';
}

/** Header {dim, count, domain}, then one {label, feature} per line. */
export function featureJsonl(records: FeatureRecord[], dim: number, domain: number): string {
  const lines = [JSON.stringify({ dim, count: records.length, domain })];
  for (const r of records) {
    lines.push(JSON.stringify({ label: r.label, feature: r.feature }));
  }
  return lines.join('\n') + '\n';
}

export function writeText(path: string, text: string): void {
  writeFileSync(path, text, 'utf-8');
}
