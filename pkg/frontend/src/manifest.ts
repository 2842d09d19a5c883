// Manifest loading and curriculum filtering against the generator's JSONL
// contract: one sorted-key object per sample, a {"summary": ...} footer,
// output paths relative to the manifest directory.

import { existsSync, readFileSync, statSync } from 'fs';
import { dirname, join } from 'path';

export interface ManifestInstance {
  mask_path: string;
  coverage: 'sharp' | 'full' | 'partial';
  blur: { blur_type: string; strength: number; [key: string]: unknown };
}

export interface ManifestEntry {
  id: string;
  source_image: string;
  mode: string;
  split: string;
  stage: number;
  seed: number;
  instances: ManifestInstance[];
  outputs: { image: string; mask: string; intensity: string };
  output_sizes: { image: number; mask: number; intensity: number };
}

export interface Manifest {
  path: string;
  entries: ManifestEntry[];
  summary: Record<string, unknown> | null;
}

export function readManifest(path: string): Manifest {
  const entries: ManifestEntry[] = [];
  let summary: Record<string, unknown> | null = null;
  for (const line of readFileSync(path, 'utf-8').split('\n')) {
    if (!line.trim()) continue;
    const obj = JSON.parse(line);
    if ('summary' in obj && !('id' in obj)) {
      summary = obj.summary;
    } else {
      entries.push(obj as ManifestEntry);
    }
  }
  return { path, entries, summary };
}

export function resolveOutput(manifest: Manifest, entry: ManifestEntry,
                              kind: 'image' | 'mask' | 'intensity'): string {
  return join(dirname(manifest.path), entry.outputs[kind]);
}

/** Verify the files behind every entry exist at their recorded sizes. */
export function checkManifest(manifest: Manifest): void {
  const problems: string[] = [];
  for (const entry of manifest.entries) {
    for (const kind of ['image', 'mask', 'intensity'] as const) {
      const path = resolveOutput(manifest, entry, kind);
      if (!existsSync(path)) {
        problems.push(`${entry.id}: missing ${kind} file ${path}`);
      } else if (statSync(path).size !== entry.output_sizes[kind]) {
        problems.push(`${entry.id}: ${kind} size mismatch`);
      }
    }
  }
  if (problems.length > 0) {
    throw new Error(`manifest integrity check failed:\n${problems.join('\n')}`);
  }
}

const STAGE1 = new Set(['straight', 'random_walk']);
const STAGE2 = new Set([...STAGE1, 'curved', 'rolling', 'edge_ring']);
const STAGE3 = new Set([...STAGE2, 'zoom_rotation']);

export const STAGE_TYPES: Record<number, Set<string>> = { 1: STAGE1, 2: STAGE2, 3: STAGE3 };

/** A sample trains at a stage iff every applied (non-sharp) blur type is allowed. */
export function allowedAtStage(entry: ManifestEntry, stage: number): boolean {
  const allowed = STAGE_TYPES[stage];
  if (!allowed) throw new Error(`no curriculum stage ${stage}`);
  return entry.instances.every(
    (inst) => inst.coverage === 'sharp' || allowed.has(inst.blur.blur_type),
  );
}
