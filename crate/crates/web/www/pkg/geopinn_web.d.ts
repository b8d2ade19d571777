/* tslint:disable */
/* eslint-disable */

export class Scene {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly n_eta: number;
    readonly n_xi: number;
    readonly note: string;
    /**
     * Row-major (ξ fastest) nodal values.
     */
    readonly values: Float64Array;
    readonly x: Float64Array;
    readonly y: Float64Array;
}

/**
 * Finite-difference steady heat solution in the annulus r ∈ [0.5, 1] with
 * T = t_in on the inner circle and 0 on the outer one.
 */
export function annulus_heat(t_in: number): Scene;

/**
 * One K-L source field (σ0 = 100, l = 0.5, 10 modes) on the wavy square.
 */
export function source_sample(seed: bigint): Scene;

/**
 * Elliptic mesh of the vessel with stenosis (s > 0) or aneurysm (s < 0),
 * coloured by the mapping Jacobian.
 */
export function vessel_mesh(s: number, n_xi: number, n_eta: number): Scene;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_scene_free: (a: number, b: number) => void;
    readonly annulus_heat: (a: number) => [number, number, number];
    readonly scene_n_eta: (a: number) => number;
    readonly scene_n_xi: (a: number) => number;
    readonly scene_note: (a: number) => [number, number];
    readonly scene_values: (a: number) => [number, number];
    readonly scene_x: (a: number) => [number, number];
    readonly scene_y: (a: number) => [number, number];
    readonly source_sample: (a: bigint) => [number, number, number];
    readonly vessel_mesh: (a: number, b: number, c: number) => [number, number, number];
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
