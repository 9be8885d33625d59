/**
 * Inference backends for the two frozen extractors.
 *
 * The speaker model maps a clip to one 192-dim vector; the contextual model
 * maps a clip to 13 layer representations of shape T x 768, where layer 1
 * is the local encoder output and T follows the convolutional frame
 * arithmetic of the upstream encoder: a 400-sample receptive field with a
 * 320-sample hop at 16 kHz, so T = floor((L - 400) / 320) + 1.
 *
 * Real pretrained checkpoints need a weights directory and a runtime this
 * environment does not provide; the deterministic reference backend stands
 * in with identical output geometry and bit-stable outputs, which is what
 * the downstream pipeline and the conformance tests consume.
 */

export const SPEAKER_DIM = 192;
export const CONTEXT_DIM = 768;
export const CONTEXT_LAYERS = 13;
export const FRAME_WINDOW = 400;
export const FRAME_HOP = 320;

export class ModelLoadFailure extends Error {}

export interface ContextualOutput {
    frames: number;
    /** 13 buffers, each frames * CONTEXT_DIM row-major. */
    layers: Float32Array[];
}

export interface InferenceBackend {
    readonly id: string;
    speakerEmbed(samples: Float32Array): Float32Array;
    contextualEmbed(samples: Float32Array): ContextualOutput;
}

export function contextualFrameCount(sampleCount: number): number {
    if (sampleCount < FRAME_WINDOW) {
        return 0;
    }
    return Math.floor((sampleCount - FRAME_WINDOW) / FRAME_HOP) + 1;
}

/** mulberry32: small deterministic PRNG, plenty for projection parameters. */
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

interface Projection {
    weights: Float64Array; // dims x 5 window features
    phases: Float64Array;  // dims
}

function buildProjection(seed: number, dims: number): Projection {
    const rand = mulberry32(seed);
    const weights = new Float64Array(dims * 5);
    const phases = new Float64Array(dims);
    for (let d = 0; d < dims; d++) {
        for (let f = 0; f < 5; f++) {
            weights[d * 5 + f] = (rand() - 0.5) * 8;
        }
        phases[d] = rand() * 2 * Math.PI;
    }
    return { weights, phases };
}

function windowFeatures(samples: Float32Array, start: number, length: number): number[] {
    let sum = 0;
    let sumSq = 0;
    let min = Infinity;
    let max = -Infinity;
    let crossings = 0;
    for (let i = start; i < start + length; i++) {
        const v = samples[i];
        sum += v;
        sumSq += v * v;
        if (v < min) min = v;
        if (v > max) max = v;
        if (i > start && v * samples[i - 1] < 0) crossings++;
    }
    const mean = sum / length;
    const rms = Math.sqrt(sumSq / length);
    return [mean, rms, min, max, crossings / length];
}

function project(features: number[], proj: Projection, out: Float32Array, offset: number, dims: number): void {
    for (let d = 0; d < dims; d++) {
        let acc = proj.phases[d];
        for (let f = 0; f < 5; f++) {
            acc += proj.weights[d * 5 + f] * features[f];
        }
        out[offset + d] = Math.fround(Math.sin(acc));
    }
}

/**
 * Frozen stand-in extractor: a fixed random sinusoidal projection of window
 * statistics. Same audio in, same bytes out, with the real models' shapes.
 */
export class ReferenceBackend implements InferenceBackend {
    readonly id: string;
    private speakerProj: Projection;
    private layerProjs: Projection[];

    constructor(seed = 0) {
        this.id = `reference:${seed}`;
        this.speakerProj = buildProjection(seed * 1000 + 1, SPEAKER_DIM);
        this.layerProjs = [];
        for (let layer = 1; layer <= CONTEXT_LAYERS; layer++) {
            this.layerProjs.push(buildProjection(seed * 1000 + 1 + layer, CONTEXT_DIM));
        }
    }

    speakerEmbed(samples: Float32Array): Float32Array {
        if (samples.length === 0) {
            throw new Error("cannot embed an empty clip");
        }
        const features = windowFeatures(samples, 0, samples.length);
        const out = new Float32Array(SPEAKER_DIM);
        project(features, this.speakerProj, out, 0, SPEAKER_DIM);
        return out;
    }

    contextualEmbed(samples: Float32Array): ContextualOutput {
        const frames = contextualFrameCount(samples.length);
        if (frames < 1) {
            throw new Error(`clip too short: ${samples.length} samples < ${FRAME_WINDOW}`);
        }
        const layers: Float32Array[] = [];
        for (let layerIdx = 0; layerIdx < CONTEXT_LAYERS; layerIdx++) {
            layers.push(new Float32Array(frames * CONTEXT_DIM));
        }
        for (let t = 0; t < frames; t++) {
            const features = windowFeatures(samples, t * FRAME_HOP, FRAME_WINDOW);
            for (let layerIdx = 0; layerIdx < CONTEXT_LAYERS; layerIdx++) {
                project(features, this.layerProjs[layerIdx], layers[layerIdx], t * CONTEXT_DIM, CONTEXT_DIM);
            }
        }
        return { frames, layers };
    }
}

export function loadBackend(modelId: string): InferenceBackend {
    if (modelId === "reference" || modelId.startsWith("reference:")) {
        const seed = modelId.includes(":") ? Number(modelId.split(":")[1]) : 0;
        if (!Number.isInteger(seed)) {
            throw new ModelLoadFailure(`bad reference seed in ${modelId}`);
        }
        return new ReferenceBackend(seed);
    }
    throw new ModelLoadFailure(
        `model ${modelId} is not available; pretrained checkpoints require a weights ` +
        `directory and runtime this build does not ship (use reference[:seed])`,
    );
}
