/**
 * Extraction job: walk the annotated clip list, decode each WAV, run both
 * frozen extractors, and emit EMB1 tensors plus the manifest CSV the
 * downstream pipeline loads. One clip yields 14 manifest rows: 13
 * contextual layers and one speaker vector. All tensor writes are atomic
 * (temp file + rename), so a crashed job can simply be re-run.
 */

import fs from "node:fs";
import path from "node:path";

import { writeEmb1Atomic } from "./emb1.js";
import { collapseAnnotations, readLabelsCsv, LabeledClip } from "./labels.js";
import {
    CONTEXT_DIM,
    CONTEXT_LAYERS,
    InferenceBackend,
    SPEAKER_DIM,
} from "./models.js";
import { readWav } from "./wav.js";

export const MANIFEST_HEADER = "clip_id,podcast_id,label,source,layer,path";

export interface ExtractionJob {
    audioRoot: string;
    labelsCsv: string;
    outDir: string;
    backend: InferenceBackend;
    device?: string;
    onProgress?: (done: number, total: number, clipId: string) => void;
}

export interface ExtractionSummary {
    manifestPath: string;
    logPath: string;
    clipsExtracted: number;
    clipsDropped: number;
    manifestRows: number;
}

interface ManifestRow {
    clipId: string;
    podcastId: string;
    label: string;
    source: "w2v2" | "ecapa";
    layer: number;
    relPath: string;
}

function manifestLine(row: ManifestRow): string {
    return [row.clipId, row.podcastId, row.label, row.source, row.layer, row.relPath].join(",");
}

function extractClip(job: ExtractionJob, clip: LabeledClip): ManifestRow[] {
    const wavPath = path.resolve(job.audioRoot, clip.wav);
    const { samples } = readWav(wavPath);

    const rows: ManifestRow[] = [];
    const contextual = job.backend.contextualEmbed(samples);
    if (contextual.layers.length !== CONTEXT_LAYERS) {
        throw new Error(`backend returned ${contextual.layers.length} layers, expected ${CONTEXT_LAYERS}`);
    }
    for (let layerIdx = 0; layerIdx < CONTEXT_LAYERS; layerIdx++) {
        const layer = layerIdx + 1; // layer 1 = local encoder
        const rel = path.join("emb", `${clip.clipId}_w2v2_L${String(layer).padStart(2, "0")}.emb1`);
        writeEmb1Atomic(path.join(job.outDir, rel), {
            frames: contextual.frames,
            dims: CONTEXT_DIM,
            values: contextual.layers[layerIdx],
        });
        rows.push({
            clipId: clip.clipId,
            podcastId: clip.podcastId,
            label: clip.label,
            source: "w2v2",
            layer,
            relPath: rel,
        });
    }

    const speaker = job.backend.speakerEmbed(samples);
    if (speaker.length !== SPEAKER_DIM) {
        throw new Error(`backend returned ${speaker.length}-dim speaker vector, expected ${SPEAKER_DIM}`);
    }
    const rel = path.join("emb", `${clip.clipId}_ecapa_L00.emb1`);
    writeEmb1Atomic(path.join(job.outDir, rel), { frames: 1, dims: SPEAKER_DIM, values: speaker });
    rows.push({
        clipId: clip.clipId,
        podcastId: clip.podcastId,
        label: clip.label,
        source: "ecapa",
        layer: 0,
        relPath: rel,
    });
    return rows;
}

export function runExtraction(job: ExtractionJob): ExtractionSummary {
    const annotated = readLabelsCsv(job.labelsCsv);
    const { kept, dropped } = collapseAnnotations(annotated);

    fs.mkdirSync(job.outDir, { recursive: true });
    const logLines: string[] = [
        `backend=${job.backend.id}`,
        `device=${job.device ?? "cpu"}`,
        "label_rule=majority vote over annotator counts; ties and all-zero rows dropped",
        `clips_annotated=${annotated.length}`,
        `clips_kept=${kept.length}`,
        `clips_dropped=${dropped.length}`,
    ];
    for (const drop of dropped) {
        logLines.push(`dropped ${drop.clipId}: ${drop.reason}`);
    }

    const rows: ManifestRow[] = [];
    kept.forEach((clip, index) => {
        rows.push(...extractClip(job, clip));
        job.onProgress?.(index + 1, kept.length, clip.clipId);
    });

    const manifestPath = path.join(job.outDir, "manifest.csv");
    const manifestBody = [MANIFEST_HEADER, ...rows.map(manifestLine)].join("\n") + "\n";
    const tmp = `${manifestPath}.tmp-${process.pid}`;
    fs.writeFileSync(tmp, manifestBody, "utf-8");
    fs.renameSync(tmp, manifestPath);

    const logPath = path.join(job.outDir, "extraction_log.txt");
    fs.writeFileSync(logPath, logLines.join("\n") + "\n", "utf-8");

    return {
        manifestPath,
        logPath,
        clipsExtracted: kept.length,
        clipsDropped: dropped.length,
        manifestRows: rows.length,
    };
}
