/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_epoch: (a: number) => number;
export const demo_new: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const demo_sample_reference: (a: number, b: number) => [number, number];
export const demo_sample_source: (a: number, b: number) => [number, number];
export const demo_step_epoch: (a: number) => [number, number, number];
export const demo_test_exact_match: (a: number) => [number, number, number];
export const demo_translate: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const demo_vocabulary: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
