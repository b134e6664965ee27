/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * One embedding dimension of the unfolded activations at `block`
     * (`-1` for the embedding output), frequency patches x time patches.
     */
    activation_map(signal: string, order: number, cutoff_hz: number, snr_db: number, seed: bigint, block: number, dim: number, filtered: boolean): Float32Array;
    /**
     * Patch-grid bin mapped from a physical cutoff.
     */
    cutoff_bin(cutoff_hz: number): number;
    embed_dim(): number;
    freq_patches(): number;
    n_frames(): number;
    n_mels(): number;
    /**
     * Randomly initialized encoder for `seed` with its silent reference.
     */
    constructor(seed: bigint);
    num_blocks(): number;
    /**
     * `[time_diff, freq_diff, kurtosis]` per site, embedding first; kurtosis
     * is NaN where every row is degenerate.
     */
    probe(signal: string, seed: bigint): Float64Array;
    /**
     * Log-mel spectrogram (mel rows x frames) of a test signal after the
     * channel; a non-finite `snr_db` leaves the signal clean.
     */
    spectrogram(signal: string, order: number, cutoff_hz: number, snr_db: number, seed: bigint): Float64Array;
    time_patches(): number;
}

/**
 * Magnitude response in dB of the channel low-pass at each frequency.
 */
export function filter_response_db(order: number, cutoff_hz: number, sample_rate_hz: number, freqs_hz: Float64Array): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_activation_map: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint, h: number, i: number, j: number) => [number, number, number, number];
    readonly demo_cutoff_bin: (a: number, b: number) => [number, number, number];
    readonly demo_embed_dim: (a: number) => number;
    readonly demo_freq_patches: (a: number) => number;
    readonly demo_n_frames: (a: number) => number;
    readonly demo_n_mels: (a: number) => number;
    readonly demo_new: (a: bigint) => [number, number, number];
    readonly demo_num_blocks: (a: number) => number;
    readonly demo_probe: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
    readonly demo_spectrogram: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number, number];
    readonly demo_time_patches: (a: number) => number;
    readonly filter_response_db: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
