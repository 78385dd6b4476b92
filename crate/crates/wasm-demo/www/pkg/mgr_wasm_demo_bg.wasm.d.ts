/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demoscenes_free: (a: number, b: number) => void;
export const box_iou: (a: number, b: number, c: number, d: number) => [number, number, number];
export const demoscenes_graphs_json: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const demoscenes_is_empty: (a: number) => number;
export const demoscenes_label_of: (a: number, b: number) => [number, number];
export const demoscenes_len: (a: number) => number;
export const demoscenes_new: (a: bigint, b: number) => [number, number, number];
export const demoscenes_scene_json: (a: number, b: number) => [number, number, number, number];
export const fuse_logits: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
