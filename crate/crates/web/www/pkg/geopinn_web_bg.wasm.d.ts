/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_scene_free: (a: number, b: number) => void;
export const annulus_heat: (a: number) => [number, number, number];
export const scene_n_eta: (a: number) => number;
export const scene_n_xi: (a: number) => number;
export const scene_note: (a: number) => [number, number];
export const scene_values: (a: number) => [number, number];
export const scene_x: (a: number) => [number, number];
export const scene_y: (a: number) => [number, number];
export const source_sample: (a: bigint) => [number, number, number];
export const vessel_mesh: (a: number, b: number, c: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
