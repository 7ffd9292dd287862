/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_lab_free: (a: number, b: number) => void;
export const lab_alpha: (a: number, b: number, c: number) => number;
export const lab_alpha_rgba: (a: number) => [number, number];
export const lab_chemical_length: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const lab_chemical_path: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const lab_components: (a: number) => number;
export const lab_crosses: (a: number) => number;
export const lab_height: (a: number) => number;
export const lab_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: bigint) => [number, number, number];
export const lab_open_fraction: (a: number) => number;
export const lab_threshold_rgba: (a: number, b: number) => [number, number];
export const lab_width: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
