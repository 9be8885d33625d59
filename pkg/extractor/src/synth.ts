/**
 * Fabricates small labeled WAV datasets so the extraction pipeline can be
 * exercised without real podcast audio: a few podcasts of 3-second 16 kHz
 * tone-plus-noise clips with annotator vote counts over the five outcomes.
 */

import fs from "node:fs";
import path from "node:path";

import { LABELS_HEADER, LABEL_NAMES } from "./labels.js";
import { EXPECTED_SAMPLE_RATE, writeWav } from "./wav.js";

function mulberry32(seed: number): () => number {
    let state = seed >>> 0;
    return () => {
        state = (state + 0x6d2b79f5) >>> 0;
        let t = state;
        t = Math.imul(t ^ (t >>> 15), t | 1);
        t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
        return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
    };
}

export interface SynthAudioOptions {
    outDir: string;
    podcasts: number;
    clipsPerPodcast: number;
    seed: number;
    seconds?: number;
    /** every n-th clip gets tied votes, to exercise the drop rule */
    tieEvery?: number;
}

export function synthAudioDataset(options: SynthAudioOptions): string {
    const { outDir, podcasts, clipsPerPodcast, seed } = options;
    const seconds = options.seconds ?? 3;
    const tieEvery = options.tieEvery ?? 0;
    const rand = mulberry32(seed);
    const sampleCount = Math.round(seconds * EXPECTED_SAMPLE_RATE);

    const lines = [LABELS_HEADER.join(",")];
    let clipIndex = 0;
    for (let p = 0; p < podcasts; p++) {
        const podcastId = `pod${String(p).padStart(3, "0")}`;
        for (let c = 0; c < clipsPerPodcast; c++) {
            const clipId = `${podcastId}_clip${String(c).padStart(3, "0")}`;
            const freq = 80 + rand() * 400;
            const samples = new Float32Array(sampleCount);
            for (let i = 0; i < sampleCount; i++) {
                samples[i] =
                    0.4 * Math.sin((2 * Math.PI * freq * i) / EXPECTED_SAMPLE_RATE) +
                    0.1 * (rand() * 2 - 1);
            }
            const wavRel = path.join("audio", `${clipId}.wav`);
            writeWav(path.join(outDir, wavRel), samples);

            const votes = new Array(LABEL_NAMES.length).fill(0);
            const winner = Math.floor(rand() * LABEL_NAMES.length);
            votes[winner] = 2;
            votes[(winner + 1) % LABEL_NAMES.length] = 1;
            clipIndex++;
            if (tieEvery > 0 && clipIndex % tieEvery === 0) {
                votes[(winner + 1) % LABEL_NAMES.length] = 2; // forced tie
            }
            lines.push([clipId, podcastId, wavRel, ...votes].join(","));
        }
    }
    const labelsPath = path.join(outDir, "labels.csv");
    fs.mkdirSync(outDir, { recursive: true });
    fs.writeFileSync(labelsPath, lines.join("\n") + "\n", "utf-8");
    return labelsPath;
}
