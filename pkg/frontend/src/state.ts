export const MIN_SCALE = 1
export const MAX_SCALE = 8

export type CompareMode = 'single' | 'split'
export type Overlay = 'none' | 'retrieval'

export interface ViewState {
    imageId: string
    // center of the viewport in LR image coordinates
    centerX: number
    centerY: number
    // screen pixels per LR pixel
    scale: number
    mode: CompareMode
    overlay: Overlay
    // split divider position as a fraction of the viewport width
    divider: number
}

export interface ImageInfo {
    imageId: string
    width: number
    height: number
}

export function clampScale(scale: number): number {
    if (!Number.isFinite(scale)) return MIN_SCALE
    return Math.min(MAX_SCALE, Math.max(MIN_SCALE, scale))
}

/** Clamp the center into the image so the viewport always intersects it. */
export function clampState(state: ViewState, image: ImageInfo): ViewState {
    return {
        ...state,
        centerX: Math.min(image.width, Math.max(0, state.centerX)),
        centerY: Math.min(image.height, Math.max(0, state.centerY)),
        scale: clampScale(state.scale),
        divider: Math.min(1, Math.max(0, state.divider)),
    }
}

export function defaultState(imageId: string, image?: ImageInfo): ViewState {
    return {
        imageId,
        centerX: image ? image.width / 2 : 0,
        centerY: image ? image.height / 2 : 0,
        scale: 2,
        mode: 'single',
        overlay: 'none',
        divider: 0.5,
    }
}

// The view state round-trips through the URL fragment so views are
// deep-linkable. Numbers are written with enough digits that a
// decode(encode(s)) round trip is exact for slider-granularity values.

export function encodeViewState(state: ViewState): string {
    const params = new URLSearchParams()
    params.set('image', state.imageId)
    params.set('cx', String(state.centerX))
    params.set('cy', String(state.centerY))
    params.set('scale', String(state.scale))
    params.set('mode', state.mode)
    params.set('overlay', state.overlay)
    params.set('divider', String(state.divider))
    return '#' + params.toString()
}

export function decodeViewState(fragment: string): ViewState | null {
    const raw = fragment.startsWith('#') ? fragment.slice(1) : fragment
    if (!raw) return null
    const params = new URLSearchParams(raw)
    const imageId = params.get('image')
    if (!imageId) return null
    const num = (key: string, fallback: number) => {
        const v = Number(params.get(key))
        return Number.isFinite(v) && params.has(key) ? v : fallback
    }
    const mode = params.get('mode')
    const overlay = params.get('overlay')
    return {
        imageId,
        centerX: num('cx', 0),
        centerY: num('cy', 0),
        scale: clampScale(num('scale', 2)),
        mode: mode === 'split' ? 'split' : 'single',
        overlay: overlay === 'retrieval' ? 'retrieval' : 'none',
        divider: Math.min(1, Math.max(0, num('divider', 0.5))),
    }
}
