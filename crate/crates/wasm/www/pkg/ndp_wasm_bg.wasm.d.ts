/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_strokefit_free: (a: number, b: number) => void;
export const basisCurves: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const fitStroke: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const kernelNames: () => [number, number];
export const rolloutPath: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number, k: number) => [number, number, number, number];
export const strokefit_fitted: (a: number) => [number, number];
export const strokefit_mse: (a: number) => number;
export const strokefit_target: (a: number) => [number, number];
export const strokefit_weights: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_drop_slice: (a: number, b: number) => void;
export const __wbindgen_start: () => void;
