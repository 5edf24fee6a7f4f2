/* tslint:disable */
/* eslint-disable */

/**
 * wasm-bindgen surface over [`DemoCore`].
 */
export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    epoch(): number;
    /**
     * `task`: copy | reorder | fertility | rare-word.
     * `variant`: baseline | win1 | win11.
     */
    constructor(task: string, variant: string, seed: number);
    /**
     * The reference target for the same sample index.
     */
    sample_reference(index: number): string;
    /**
     * A held-out source sentence to try (index wraps around).
     */
    sample_source(index: number): string;
    /**
     * Run one training epoch; returns the mean token NLL.
     */
    step_epoch(): number;
    /**
     * Greedy exact-match rate (percent) on the 20 held-out sentences.
     */
    test_exact_match(): number;
    /**
     * Translate one sentence; returns the trace as a JSON string.
     */
    translate(line: string, beam: number): string;
    /**
     * Tokens the model knows, space-separated.
     */
    vocabulary(): string;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_epoch: (a: number) => number;
    readonly demo_new: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly demo_sample_reference: (a: number, b: number) => [number, number];
    readonly demo_sample_source: (a: number, b: number) => [number, number];
    readonly demo_step_epoch: (a: number) => [number, number, number];
    readonly demo_test_exact_match: (a: number) => [number, number, number];
    readonly demo_translate: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_vocabulary: (a: number) => [number, number];
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
