import { TileSpec, Viewport, visibleTiles } from './geometry'
import { ViewState } from './state'
import { Transport } from './transport'

export type Method = 'iste' | 'bicubic'

/** Match the service cache key quantum so a continuous slider maps
 * near-duplicate scales onto the same tile URLs. */
export function quantizeScale(scale: number): number {
    return Math.round(scale * 100) / 100
}

export function tileUrl(
    imageId: string, spec: TileSpec, scale: number, method: Method = 'iste',
): string {
    const base = method === 'iste' ? '/v1/tile' : '/v1/compare'
    const params = new URLSearchParams({
        image_id: imageId,
        x: String(spec.x),
        y: String(spec.y),
        w: String(spec.w),
        h: String(spec.h),
        scale: String(quantizeScale(scale)),
    })
    if (method !== 'iste') params.set('method', method)
    return `${base}?${params.toString()}`
}

export interface TileDraw {
    spec: TileSpec
    image: unknown | null
}

export interface SyncResult {
    draws: TileDraw[]
    requested: string[]
}

/**
 * One tiled layer: owns a URL-keyed cache of decoded tiles and the set of
 * in-flight requests. sync() reconciles the layer against the current view:
 * visible cached tiles are returned for drawing, missing ones are requested,
 * and pending requests that scrolled out of view are aborted.
 */
export class TileLayer {
    private cache = new Map<string, unknown>()
    private pending = new Map<string, AbortController>()
    onTile: (() => void) | null = null
    onError: ((err: unknown) => void) | null = null

    constructor(
        private transport: Transport,
        private method: Method = 'iste',
    ) {}

    sync(
        state: ViewState, view: Viewport, imageW: number, imageH: number,
    ): SyncResult {
        const tiles = visibleTiles(state, view, imageW, imageH)
        const wanted = new Map<string, TileSpec>()
        for (const spec of tiles) {
            wanted.set(tileUrl(state.imageId, spec, state.scale, this.method), spec)
        }
        for (const [url, controller] of this.pending) {
            if (!wanted.has(url)) {
                controller.abort()
                this.pending.delete(url)
            }
        }
        const draws: TileDraw[] = []
        const requested: string[] = []
        for (const [url, spec] of wanted) {
            const hit = this.cache.get(url)
            draws.push({ spec, image: hit ?? null })
            if (hit === undefined && !this.pending.has(url)) {
                requested.push(url)
                this.request(url)
            }
        }
        return { draws, requested }
    }

    private request(url: string): void {
        const controller = new AbortController()
        this.pending.set(url, controller)
        this.transport
            .fetchTile(url, controller.signal)
            .then((image) => {
                if (this.pending.delete(url)) {
                    this.cache.set(url, image)
                    this.onTile?.()
                }
            })
            .catch((err) => {
                if (this.pending.delete(url)) this.onError?.(err)
            })
    }

    inFlight(): number {
        return this.pending.size
    }

    cached(url: string): unknown | undefined {
        return this.cache.get(url)
    }

    clear(): void {
        for (const controller of this.pending.values()) controller.abort()
        this.pending.clear()
        this.cache.clear()
    }
}
