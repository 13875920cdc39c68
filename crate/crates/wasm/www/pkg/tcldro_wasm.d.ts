/* tslint:disable */
/* eslint-disable */

/**
 * Pipeline state shared by every query.
 */
export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Simulates `devices` TCLs for `sim_hours` and draws `samples` perturbed
     * transition matrices. Small values keep the page responsive.
     */
    constructor(seed: number, devices: number, sim_hours: number, samples: number);
    /**
     * `{hours, standard, power, delta, objective}` for `method` at `gamma`.
     * `knob` is eta for hybrid and psi for wasserstein; other methods ignore it.
     */
    profile(method: string, gamma: number, knob: number): string;
    /**
     * Number of discrete states.
     */
    states(): number;
    /**
     * `[{x, mean_abs_delta, max_abs_delta}]` with `axis` ("gamma", "eta" or
     * "psi") taking each of `values` while the other knobs stay fixed.
     */
    sweep(method: string, axis: string, values: Float64Array, gamma: number, knob: number): string;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_new: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly demo_profile: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly demo_states: (a: number) => number;
    readonly demo_sweep: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
