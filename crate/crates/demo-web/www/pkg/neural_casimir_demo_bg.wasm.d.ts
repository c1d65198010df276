/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_pendulumdemo_free: (a: number, b: number) => void;
export const pendulumdemo_bound: (a: number) => number;
export const pendulumdemo_distance: (a: number) => number;
export const pendulumdemo_epsilon: (a: number) => number;
export const pendulumdemo_loss_history: (a: number) => [number, number];
export const pendulumdemo_new: (a: number, b: number, c: number) => [number, number, number];
export const pendulumdemo_simulate: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const pendulumdemo_surface: (a: number, b: number, c: number) => [number, number, number, number];
export const pendulumdemo_xi_star: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
