/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * The first `prefix` kmeans++ centroids.
     */
    centroids(prefix: number): Float64Array;
    /**
     * Runs the adaptive wrapper and returns a JSON object with the
     * centroids, the exact cost, the final sample and the round log.
     */
    cluster(k: number, eps: number): string;
    is_empty(): boolean;
    len(): number;
    /**
     * `n` points from `k` Gaussians; kmeans++ runs for `ell` steps.
     */
    constructor(n: number, k: number, ell: number, seed: number);
    points(): Float64Array;
    /**
     * `i * v_i` for every prefix length `i`.
     */
    prefix_scores(): Float64Array;
    /**
     * Number of kmeans++ centroids available.
     */
    prefixes(): number;
    /**
     * One-to-all probabilities of the first `prefix` centroids.
     */
    probabilities(prefix: number): Float64Array;
    /**
     * Indices sampled at `min{1, factor * pi}`. The randomization is fixed,
     * so raising `factor` only ever adds points.
     */
    sample(prefix: number, factor: number): Uint32Array;
    sweet_spot(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_centroids: (a: number, b: number) => [number, number, number, number];
    readonly demo_cluster: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_is_empty: (a: number) => number;
    readonly demo_len: (a: number) => number;
    readonly demo_new: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly demo_points: (a: number) => [number, number];
    readonly demo_prefix_scores: (a: number) => [number, number];
    readonly demo_prefixes: (a: number) => number;
    readonly demo_probabilities: (a: number, b: number) => [number, number, number, number];
    readonly demo_sample: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_sweet_spot: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
