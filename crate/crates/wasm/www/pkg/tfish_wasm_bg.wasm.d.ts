/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_activation_map: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint, h: number, i: number, j: number) => [number, number, number, number];
export const demo_cutoff_bin: (a: number, b: number) => [number, number, number];
export const demo_embed_dim: (a: number) => number;
export const demo_freq_patches: (a: number) => number;
export const demo_n_frames: (a: number) => number;
export const demo_n_mels: (a: number) => number;
export const demo_new: (a: bigint) => [number, number, number];
export const demo_num_blocks: (a: number) => number;
export const demo_probe: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
export const demo_spectrogram: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number, number];
export const demo_time_patches: (a: number) => number;
export const filter_response_db: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
