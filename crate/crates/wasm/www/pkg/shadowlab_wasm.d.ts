/* tslint:disable */
/* eslint-disable */

export class Lab {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Slope value at a visible cell.
     */
    alpha(i: number, j: number): number;
    /**
     * Heatmap of the slope field over the visible window.
     */
    alpha_rgba(): Uint8Array;
    /**
     * Length of the path between two cells, `Infinity` when disconnected.
     */
    chemical_length(i0: number, j0: number, i1: number, j1: number): number;
    /**
     * Shortest open path in the last threshold as flat `[i0, j0, i1, j1, ..]`;
     * empty when the cells are not connected.
     */
    chemical_path(i0: number, j0: number, i1: number, j1: number): Uint32Array;
    components(): number;
    /**
     * Left-right crossing of the whole window by the last threshold.
     */
    crosses(): boolean;
    height(): number;
    /**
     * Samples `f` on a `width x height` window of spacing `h` and computes
     * the slope field over rays shorter than `ray_window`.
     */
    constructor(family: string, scale: number, h: number, width: number, height: number, ray_window: number, seed: bigint);
    open_fraction(): number;
    /**
     * Thresholds at `level` and returns the open set coloured by component.
     */
    threshold_rgba(level: number): Uint8Array;
    width(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_lab_free: (a: number, b: number) => void;
    readonly lab_alpha: (a: number, b: number, c: number) => number;
    readonly lab_alpha_rgba: (a: number) => [number, number];
    readonly lab_chemical_length: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly lab_chemical_path: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly lab_components: (a: number) => number;
    readonly lab_crosses: (a: number) => number;
    readonly lab_height: (a: number) => number;
    readonly lab_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: bigint) => [number, number, number];
    readonly lab_open_fraction: (a: number) => number;
    readonly lab_threshold_rgba: (a: number, b: number) => [number, number];
    readonly lab_width: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
