/**
 * EMB1 binary tensor files, bit-compatible with the downstream pipeline:
 * magic "EMB1", version 0x01, dtype 0x01 (float32 LE), two reserved zero
 * bytes, T and D as uint32 LE, then exactly T*D float32 values row-major.
 */

import fs from "node:fs";
import path from "node:path";

const MAGIC = "EMB1";
const HEADER_BYTES = 16;
const VERSION = 0x01;
const DTYPE_FLOAT32 = 0x01;

export interface Emb1Tensor {
    frames: number;
    dims: number;
    values: Float32Array; // length frames * dims, row-major
}

export function encodeEmb1(tensor: Emb1Tensor): Buffer {
    const { frames, dims, values } = tensor;
    if (frames < 1 || dims < 1) {
        throw new Error(`empty tensor: T=${frames} D=${dims}`);
    }
    if (values.length !== frames * dims) {
        throw new Error(`payload length ${values.length} != ${frames}*${dims}`);
    }
    for (let i = 0; i < values.length; i++) {
        if (!Number.isFinite(values[i])) {
            throw new Error(`non-finite value at index ${i}`);
        }
    }
    const buf = Buffer.alloc(HEADER_BYTES + 4 * values.length);
    buf.write(MAGIC, 0, "ascii");
    buf.writeUInt8(VERSION, 4);
    buf.writeUInt8(DTYPE_FLOAT32, 5);
    buf.writeUInt16LE(0, 6);
    buf.writeUInt32LE(frames, 8);
    buf.writeUInt32LE(dims, 12);
    for (let i = 0; i < values.length; i++) {
        buf.writeFloatLE(values[i], HEADER_BYTES + 4 * i);
    }
    return buf;
}

export function decodeEmb1(buf: Buffer, label = "buffer"): Emb1Tensor {
    if (buf.length < HEADER_BYTES) {
        throw new Error(`${label}: shorter than the 16-byte header`);
    }
    if (buf.toString("ascii", 0, 4) !== MAGIC) {
        throw new Error(`${label}: bad magic`);
    }
    if (buf.readUInt8(4) !== VERSION || buf.readUInt8(5) !== DTYPE_FLOAT32 || buf.readUInt16LE(6) !== 0) {
        throw new Error(`${label}: unsupported version/dtype/reserved bytes`);
    }
    const frames = buf.readUInt32LE(8);
    const dims = buf.readUInt32LE(12);
    const expected = HEADER_BYTES + 4 * frames * dims;
    if (frames < 1 || dims < 1 || buf.length !== expected) {
        throw new Error(`${label}: ${buf.length} bytes, expected ${expected} for ${frames}x${dims}`);
    }
    const values = new Float32Array(frames * dims);
    for (let i = 0; i < values.length; i++) {
        values[i] = buf.readFloatLE(HEADER_BYTES + 4 * i);
    }
    return { frames, dims, values };
}

export function readEmb1(filePath: string): Emb1Tensor {
    return decodeEmb1(fs.readFileSync(filePath), filePath);
}

/** Write via a temp file + rename so a crashed job never leaves partial tensors. */
export function writeEmb1Atomic(filePath: string, tensor: Emb1Tensor): void {
    const encoded = encodeEmb1(tensor);
    fs.mkdirSync(path.dirname(filePath), { recursive: true });
    const tmp = `${filePath}.tmp-${process.pid}`;
    fs.writeFileSync(tmp, encoded);
    fs.renameSync(tmp, filePath);
}
