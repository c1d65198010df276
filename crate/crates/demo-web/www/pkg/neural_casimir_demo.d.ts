/* tslint:disable */
/* eslint-disable */

export class PendulumDemo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * `ε/(a − ε)`, NaN when `a ≤ ε`.
     */
    bound(): number;
    /**
     * NaN when no minimum was found near `z*`.
     */
    distance(): number;
    epsilon(): number;
    loss_history(): Float64Array;
    constructor(seed: number, epochs: number, margin: number);
    simulate(q: number, p: number, xi: number, horizon: number): Float64Array;
    surface(width: number, height: number): Float64Array;
    xi_star(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_pendulumdemo_free: (a: number, b: number) => void;
    readonly pendulumdemo_bound: (a: number) => number;
    readonly pendulumdemo_distance: (a: number) => number;
    readonly pendulumdemo_epsilon: (a: number) => number;
    readonly pendulumdemo_loss_history: (a: number) => [number, number];
    readonly pendulumdemo_new: (a: number, b: number, c: number) => [number, number, number];
    readonly pendulumdemo_simulate: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly pendulumdemo_surface: (a: number, b: number, c: number) => [number, number, number, number];
    readonly pendulumdemo_xi_star: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
