import { ViewState, clampScale } from './state'

/** Tile edge in LR pixels. Small enough that one tile's inference stays
 * interactive, large enough that a viewport is a handful of requests. */
export const TILE = 64

export interface Viewport {
    width: number
    height: number
}

/** LR image coordinates of a screen point under the given view. */
export function screenToImage(
    state: ViewState, view: Viewport, sx: number, sy: number,
): { x: number; y: number } {
    return {
        x: state.centerX + (sx - view.width / 2) / state.scale,
        y: state.centerY + (sy - view.height / 2) / state.scale,
    }
}

/** Screen coordinates of an LR image point under the given view. */
export function imageToScreen(
    state: ViewState, view: Viewport, ix: number, iy: number,
): { x: number; y: number } {
    return {
        x: (ix - state.centerX) * state.scale + view.width / 2,
        y: (iy - state.centerY) * state.scale + view.height / 2,
    }
}

/** Zoom about a screen-space anchor: the image point under the anchor
 * stays under the anchor after the scale change (anchor invariance). */
export function wheelZoom(
    state: ViewState, view: Viewport, anchorX: number, anchorY: number, factor: number,
): ViewState {
    const next = clampScale(state.scale * factor)
    const pivot = screenToImage(state, view, anchorX, anchorY)
    return {
        ...state,
        scale: next,
        centerX: pivot.x - (anchorX - view.width / 2) / next,
        centerY: pivot.y - (anchorY - view.height / 2) / next,
    }
}

/** Slider zoom: absolute scale about the viewport center. */
export function sliderZoom(state: ViewState, scale: number): ViewState {
    return { ...state, scale: clampScale(scale) }
}

export function pan(state: ViewState, dxScreen: number, dyScreen: number): ViewState {
    return {
        ...state,
        centerX: state.centerX - dxScreen / state.scale,
        centerY: state.centerY - dyScreen / state.scale,
    }
}

export interface TileSpec {
    // LR-pixel crop of the source image
    x: number
    y: number
    w: number
    h: number
    // top-left placement on screen, in screen pixels
    screenX: number
    screenY: number
}

/** The set of TILE-aligned LR tiles intersecting the viewport, with their
 * subpixel screen placement. Edge tiles are shrunk to the image bounds. */
export function visibleTiles(
    state: ViewState, view: Viewport, imageW: number, imageH: number,
): TileSpec[] {
    const s = state.scale
    const x0 = state.centerX - view.width / 2 / s
    const x1 = state.centerX + view.width / 2 / s
    const y0 = state.centerY - view.height / 2 / s
    const y1 = state.centerY + view.height / 2 / s
    const txMin = Math.max(0, Math.floor(x0 / TILE))
    const txMax = Math.min(Math.ceil(imageW / TILE) - 1, Math.ceil(x1 / TILE) - 1)
    const tyMin = Math.max(0, Math.floor(y0 / TILE))
    const tyMax = Math.min(Math.ceil(imageH / TILE) - 1, Math.ceil(y1 / TILE) - 1)
    const tiles: TileSpec[] = []
    for (let ty = tyMin; ty <= tyMax; ty++) {
        for (let tx = txMin; tx <= txMax; tx++) {
            const x = tx * TILE
            const y = ty * TILE
            const screen = imageToScreen(state, view, x, y)
            tiles.push({
                x,
                y,
                w: Math.min(TILE, imageW - x),
                h: Math.min(TILE, imageH - y),
                screenX: screen.x,
                screenY: screen.y,
            })
        }
    }
    return tiles
}

/** Upper bound on simultaneously visible tiles: ceil(viewport/tile)+1 per
 * axis. Used by the no-request-storm invariant. */
export function maxVisibleTiles(view: Viewport, scale: number): number {
    const perX = Math.ceil(view.width / (TILE * scale)) + 1
    const perY = Math.ceil(view.height / (TILE * scale)) + 1
    return perX * perY
}
