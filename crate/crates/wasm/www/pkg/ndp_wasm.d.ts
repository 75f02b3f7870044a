/* tslint:disable */
/* eslint-disable */

/**
 * Least-squares DMP fit of one canonical digit stroke.
 */
export class StrokeFit {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    fitted(): Float64Array;
    /**
     * Mean squared distance per point, start excluded.
     */
    mse(): number;
    /**
     * The demonstration, start point included.
     */
    target(): Float64Array;
    weights(): Float64Array;
}

export function basisCurves(n_basis: number, kernel: string, epsilon: number, samples: number): Float64Array;

export function fitStroke(digit: number, n_basis: number, t_points: number, alpha: number, kernel: string): StrokeFit;

export function kernelNames(): string[];

export function rolloutPath(w: Float64Array, goal_x: number, goal_y: number, start_x: number, start_y: number, n_basis: number, m_steps: number, alpha: number, kernel: string): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_strokefit_free: (a: number, b: number) => void;
    readonly basisCurves: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly fitStroke: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly kernelNames: () => [number, number];
    readonly rolloutPath: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number, k: number) => [number, number, number, number];
    readonly strokefit_fitted: (a: number) => [number, number];
    readonly strokefit_mse: (a: number) => number;
    readonly strokefit_target: (a: number) => [number, number];
    readonly strokefit_weights: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_drop_slice: (a: number, b: number) => void;
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
