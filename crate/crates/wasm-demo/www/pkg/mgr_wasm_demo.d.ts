/* tslint:disable */
/* eslint-disable */

/**
 * A handful of synthetic scenes plus their feature store.
 */
export class DemoScenes {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Both relation graphs for the scene's first pair.
     */
    graphs_json(index: number, dilation: number, min_keypoint_confidence: number, pose_gating: boolean): string;
    is_empty(): boolean;
    /**
     * Class name of the scene's first pair.
     */
    label_of(index: number): string | undefined;
    len(): number;
    constructor(seed: bigint, count: number);
    /**
     * Scene annotation in the on-disk JSON layout.
     */
    scene_json(index: number): string;
}

/**
 * IoU of two `[x1, y1, x2, y2]` boxes.
 */
export function box_iou(a: Float64Array, b: Float64Array): number;

/**
 * Softmax of both logit vectors, fused with weights `(w_global, 1 - w_global)`.
 */
export function fuse_logits(global_logits: Float64Array, graph_logits: Float64Array, w_global: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demoscenes_free: (a: number, b: number) => void;
    readonly box_iou: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly demoscenes_graphs_json: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly demoscenes_is_empty: (a: number) => number;
    readonly demoscenes_label_of: (a: number, b: number) => [number, number];
    readonly demoscenes_len: (a: number) => number;
    readonly demoscenes_new: (a: bigint, b: number) => [number, number, number];
    readonly demoscenes_scene_json: (a: number, b: number) => [number, number, number, number];
    readonly fuse_logits: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
