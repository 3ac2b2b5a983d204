/* tslint:disable */
/* eslint-disable */

/**
 * DET points and equal error rate; `is_target` holds 0 or 1 per score.
 */
export function det_curve(scores: Float64Array, is_target: Uint8Array): string;

/**
 * Cost of tab-separated `id<TAB>label` decisions against the truth, with
 * the class count taken from the distinct in-set truth labels.
 */
export function evaluate(decisions: string, truth: string, p_oos: number): string;

/**
 * Fits a full-covariance mixture to `xy` (interleaved x, y pairs),
 * letting the message-length criterion pick the component count.
 */
export function fit_mixture(xy: Float64Array, c_max: number, seed: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly det_curve: (a: number, b: number, c: number, d: number) => [number, number];
    readonly evaluate: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly fit_mixture: (a: number, b: number, c: number, d: bigint) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
