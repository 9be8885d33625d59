#!/usr/bin/env node
/**
 * Extraction front-end CLI.
 *
 *   stutterkit-extract extract --audio-root DIR --labels-csv FILE --out DIR
 *                              [--model reference:0] [--device cpu]
 *   stutterkit-extract synth-audio --out DIR [--podcasts 2] [--clips 5]
 *                                  [--seed 0] [--tie-every 0]
 *
 * Exit codes: 0 success, 1 bad arguments or input validation, 2 runtime
 * failure mid-extraction.
 */

import { runExtraction } from "./extract.js";
import { loadBackend, ModelLoadFailure } from "./models.js";
import { synthAudioDataset } from "./synth.js";
import { AudioDecodeFailure } from "./wav.js";

type Flags = Record<string, string>;

function parseFlags(argv: string[]): Flags {
    const flags: Flags = {};
    for (let i = 0; i < argv.length; i++) {
        const arg = argv[i];
        if (!arg.startsWith("--")) {
            throw new Error(`unexpected argument ${arg}`);
        }
        const key = arg.slice(2);
        const value = argv[i + 1];
        if (value === undefined || value.startsWith("--")) {
            throw new Error(`flag --${key} needs a value`);
        }
        flags[key] = value;
        i++;
    }
    return flags;
}

function required(flags: Flags, key: string): string {
    const value = flags[key];
    if (value === undefined) {
        throw new Error(`missing required flag --${key}`);
    }
    return value;
}

function intFlag(flags: Flags, key: string, fallback: number): number {
    if (flags[key] === undefined) return fallback;
    const n = Number(flags[key]);
    if (!Number.isInteger(n)) {
        throw new Error(`flag --${key} expects an integer, got ${flags[key]}`);
    }
    return n;
}

export function main(argv: string[]): number {
    const [command, ...rest] = argv;
    let flags: Flags;
    let synthOptions: Parameters<typeof synthAudioDataset>[0] | null = null;
    try {
        if (command !== "extract" && command !== "synth-audio") {
            console.error("usage: stutterkit-extract <extract|synth-audio> [flags]");
            return 1;
        }
        flags = parseFlags(rest);
        required(flags, "out");
        if (command === "extract") {
            required(flags, "audio-root");
            required(flags, "labels-csv");
        } else {
            synthOptions = {
                outDir: flags["out"],
                podcasts: intFlag(flags, "podcasts", 2),
                clipsPerPodcast: intFlag(flags, "clips", 5),
                seed: intFlag(flags, "seed", 0),
                tieEvery: intFlag(flags, "tie-every", 0),
            };
        }
    } catch (err) {
        console.error(`usage error: ${(err as Error).message}`);
        return 1;
    }

    try {
        if (synthOptions !== null) {
            const labelsPath = synthAudioDataset(synthOptions);
            console.log(`wrote ${labelsPath}`);
            return 0;
        }
        const backend = loadBackend(flags["model"] ?? "reference:0");
        const summary = runExtraction({
            audioRoot: flags["audio-root"],
            labelsCsv: flags["labels-csv"],
            outDir: flags["out"],
            backend,
            device: flags["device"] ?? "cpu",
            onProgress: (done, total, clipId) => {
                if (done === total || done % 25 === 0) {
                    console.log(`[${done}/${total}] ${clipId}`);
                }
            },
        });
        console.log(
            `extracted ${summary.clipsExtracted} clips (${summary.manifestRows} rows, ` +
            `${summary.clipsDropped} dropped) -> ${summary.manifestPath}`,
        );
        return 0;
    } catch (err) {
        if (err instanceof ModelLoadFailure || err instanceof AudioDecodeFailure) {
            console.error(`error: ${(err as Error).message}`);
            return 2;
        }
        console.error(`error: ${(err as Error).message}`);
        return 2;
    }
}

const invokedDirectly = process.argv[1] !== undefined &&
    import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
    process.exit(main(process.argv.slice(2)));
}
