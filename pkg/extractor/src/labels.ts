/**
 * Clip annotations and the label-collapse rule.
 *
 * The labels CSV carries per-clip annotator vote counts over the five
 * outcomes, header:
 *
 *   clip_id,podcast_id,wav,repetition,prolongation,block,interjection,fluent
 *
 * A clip keeps the label with the strictly highest vote count; ties and
 * all-zero rows are dropped (and logged by the extraction job). Non-speech
 * annotation tags are expected to be excluded before this stage.
 */

import fs from "node:fs";

export const LABEL_NAMES = ["repetition", "prolongation", "block", "interjection", "fluent"] as const;
export type LabelName = (typeof LABEL_NAMES)[number];

export const LABELS_HEADER = ["clip_id", "podcast_id", "wav", ...LABEL_NAMES];

export interface AnnotatedClip {
    clipId: string;
    podcastId: string;
    wav: string;
    votes: number[]; // five counts in LABEL_NAMES order
}

export interface LabeledClip {
    clipId: string;
    podcastId: string;
    wav: string;
    label: LabelName;
}

export interface CollapseResult {
    kept: LabeledClip[];
    dropped: { clipId: string; reason: string }[];
}

export function collapseVotes(votes: number[]): LabelName | null {
    let best = -1;
    let bestCount = 0;
    let tied = false;
    for (let i = 0; i < votes.length; i++) {
        if (votes[i] > bestCount) {
            best = i;
            bestCount = votes[i];
            tied = false;
        } else if (votes[i] === bestCount && votes[i] > 0) {
            tied = true;
        }
    }
    if (bestCount <= 0 || tied) {
        return null; // unannotated or ambiguous
    }
    return LABEL_NAMES[best];
}

export function collapseAnnotations(clips: AnnotatedClip[]): CollapseResult {
    const kept: LabeledClip[] = [];
    const dropped: { clipId: string; reason: string }[] = [];
    for (const clip of clips) {
        const label = collapseVotes(clip.votes);
        if (label === null) {
            const reason = clip.votes.every((v) => v === 0) ? "no annotations" : "annotator tie";
            dropped.push({ clipId: clip.clipId, reason });
            continue;
        }
        kept.push({ clipId: clip.clipId, podcastId: clip.podcastId, wav: clip.wav, label });
    }
    return { kept, dropped };
}

function splitCsvLine(line: string): string[] {
    return line.split(",").map((cell) => cell.trim());
}

export function readLabelsCsv(filePath: string): AnnotatedClip[] {
    const text = fs.readFileSync(filePath, "utf-8");
    const lines = text.split(/\r?\n/).filter((line) => line.length > 0);
    if (lines.length === 0 || splitCsvLine(lines[0]).join(",") !== LABELS_HEADER.join(",")) {
        throw new Error(`${filePath}: first row must be exactly ${LABELS_HEADER.join(",")}`);
    }
    const clips: AnnotatedClip[] = [];
    const seen = new Set<string>();
    for (let i = 1; i < lines.length; i++) {
        const cells = splitCsvLine(lines[i]);
        if (cells.length !== LABELS_HEADER.length) {
            throw new Error(`${filePath}:${i + 1}: expected ${LABELS_HEADER.length} fields`);
        }
        const [clipId, podcastId, wav, ...voteCells] = cells;
        if (seen.has(clipId)) {
            throw new Error(`${filePath}:${i + 1}: duplicate clip_id ${clipId}`);
        }
        seen.add(clipId);
        const votes = voteCells.map((cell) => {
            const n = Number(cell);
            if (!Number.isInteger(n) || n < 0) {
                throw new Error(`${filePath}:${i + 1}: bad vote count ${cell}`);
            }
            return n;
        });
        clips.push({ clipId, podcastId, wav, votes });
    }
    return clips;
}
