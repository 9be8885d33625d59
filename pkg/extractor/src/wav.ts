/**
 * Minimal RIFF/WAVE support: mono 16 kHz clips as PCM16 or IEEE float32.
 * The extractor expects pre-resampled audio; anything else is rejected.
 */

import fs from "node:fs";
import path from "node:path";

export const EXPECTED_SAMPLE_RATE = 16000;

export class AudioDecodeFailure extends Error {}

export interface WavClip {
    sampleRate: number;
    samples: Float32Array;
}

export function decodeWav(buf: Buffer, label = "wav"): WavClip {
    if (buf.length < 44 || buf.toString("ascii", 0, 4) !== "RIFF" || buf.toString("ascii", 8, 12) !== "WAVE") {
        throw new AudioDecodeFailure(`${label}: not a RIFF/WAVE file`);
    }
    let offset = 12;
    let format: { audioFormat: number; channels: number; sampleRate: number; bitsPerSample: number } | null = null;
    let data: Buffer | null = null;
    while (offset + 8 <= buf.length) {
        const chunkId = buf.toString("ascii", offset, offset + 4);
        const chunkSize = buf.readUInt32LE(offset + 4);
        const body = buf.subarray(offset + 8, offset + 8 + chunkSize);
        if (chunkId === "fmt ") {
            format = {
                audioFormat: body.readUInt16LE(0),
                channels: body.readUInt16LE(2),
                sampleRate: body.readUInt32LE(4),
                bitsPerSample: body.readUInt16LE(14),
            };
        } else if (chunkId === "data") {
            data = body;
        }
        offset += 8 + chunkSize + (chunkSize % 2); // chunks are word-aligned
    }
    if (!format || !data) {
        throw new AudioDecodeFailure(`${label}: missing fmt or data chunk`);
    }
    if (format.channels !== 1) {
        throw new AudioDecodeFailure(`${label}: expected mono, got ${format.channels} channels`);
    }
    if (format.sampleRate !== EXPECTED_SAMPLE_RATE) {
        throw new AudioDecodeFailure(
            `${label}: expected ${EXPECTED_SAMPLE_RATE} Hz (resample upstream), got ${format.sampleRate}`,
        );
    }
    let samples: Float32Array;
    if (format.audioFormat === 1 && format.bitsPerSample === 16) {
        samples = new Float32Array(data.length >> 1);
        for (let i = 0; i < samples.length; i++) {
            samples[i] = data.readInt16LE(i * 2) / 32768;
        }
    } else if (format.audioFormat === 3 && format.bitsPerSample === 32) {
        samples = new Float32Array(data.length >> 2);
        for (let i = 0; i < samples.length; i++) {
            samples[i] = data.readFloatLE(i * 4);
        }
    } else {
        throw new AudioDecodeFailure(
            `${label}: unsupported encoding (format ${format.audioFormat}, ${format.bitsPerSample} bits)`,
        );
    }
    for (let i = 0; i < samples.length; i++) {
        if (!Number.isFinite(samples[i])) {
            throw new AudioDecodeFailure(`${label}: non-finite sample at ${i}`);
        }
    }
    return { sampleRate: format.sampleRate, samples };
}

export function readWav(filePath: string): WavClip {
    let buf: Buffer;
    try {
        buf = fs.readFileSync(filePath);
    } catch (err) {
        throw new AudioDecodeFailure(`${filePath}: ${(err as Error).message}`);
    }
    return decodeWav(buf, filePath);
}

export function encodeWavPcm16(samples: Float32Array, sampleRate = EXPECTED_SAMPLE_RATE): Buffer {
    const dataBytes = samples.length * 2;
    const buf = Buffer.alloc(44 + dataBytes);
    buf.write("RIFF", 0, "ascii");
    buf.writeUInt32LE(36 + dataBytes, 4);
    buf.write("WAVE", 8, "ascii");
    buf.write("fmt ", 12, "ascii");
    buf.writeUInt32LE(16, 16);
    buf.writeUInt16LE(1, 20); // PCM
    buf.writeUInt16LE(1, 22); // mono
    buf.writeUInt32LE(sampleRate, 24);
    buf.writeUInt32LE(sampleRate * 2, 28);
    buf.writeUInt16LE(2, 32);
    buf.writeUInt16LE(16, 34);
    buf.write("data", 36, "ascii");
    buf.writeUInt32LE(dataBytes, 40);
    for (let i = 0; i < samples.length; i++) {
        const clamped = Math.max(-1, Math.min(1, samples[i]));
        buf.writeInt16LE(Math.round(clamped * 32767), 44 + i * 2);
    }
    return buf;
}

export function writeWav(filePath: string, samples: Float32Array, sampleRate = EXPECTED_SAMPLE_RATE): void {
    fs.mkdirSync(path.dirname(filePath), { recursive: true });
    fs.writeFileSync(filePath, encodeWavPcm16(samples, sampleRate));
}
