import { Viewport, pan, sliderZoom, wheelZoom } from './geometry'
import { ImageInfo, ViewState, clampState, decodeViewState, encodeViewState } from './state'
import { TileDraw, TileLayer } from './tiles'
import { Transport } from './transport'

const ZOOM_STEP = 1.1

/**
 * Canvas viewer: one rendering loop over two tile layers (model output and
 * bicubic for split compare). Pointer drag pans, wheel zooms about the
 * cursor, the slider sets absolute scale. Tiles drawn at a previous scale
 * stay on screen, rescaled, until their replacements arrive.
 */
export class Viewer {
    state: ViewState
    private image: ImageInfo
    private modelLayer: TileLayer
    private bicubicLayer: TileLayer
    private ctx: CanvasRenderingContext2D
    private lastDraws: { scale: number; centerX: number; centerY: number; draws: TileDraw[] } | null = null
    private dragging = false
    private dragX = 0
    private dragY = 0
    private raf = 0

    constructor(
        private canvas: HTMLCanvasElement,
        transport: Transport,
        image: ImageInfo,
        private banner: HTMLElement | null = null,
    ) {
        this.image = image
        this.ctx = canvas.getContext('2d')!
        this.modelLayer = new TileLayer(transport, 'iste')
        this.bicubicLayer = new TileLayer(transport, 'bicubic')
        const fromUrl = decodeViewState(location.hash)
        this.state = clampState(
            fromUrl && fromUrl.imageId === image.imageId
                ? fromUrl
                : {
                      imageId: image.imageId,
                      centerX: image.width / 2,
                      centerY: image.height / 2,
                      scale: 2,
                      mode: 'single',
                      overlay: 'none',
                      divider: 0.5,
                  },
            image,
        )
        for (const layer of [this.modelLayer, this.bicubicLayer]) {
            layer.onTile = () => this.scheduleRender()
            layer.onError = () => this.showBanner('tile request failed; showing cached tiles')
        }
        this.bindEvents()
    }

    private viewport(): Viewport {
        return { width: this.canvas.width, height: this.canvas.height }
    }

    private bindEvents(): void {
        this.canvas.addEventListener('pointerdown', (e) => {
            this.dragging = true
            this.dragX = e.offsetX
            this.dragY = e.offsetY
            this.canvas.setPointerCapture(e.pointerId)
        })
        this.canvas.addEventListener('pointermove', (e) => {
            if (!this.dragging) return
            this.update(pan(this.state, e.offsetX - this.dragX, e.offsetY - this.dragY))
            this.dragX = e.offsetX
            this.dragY = e.offsetY
        })
        this.canvas.addEventListener('pointerup', () => {
            this.dragging = false
        })
        this.canvas.addEventListener('wheel', (e) => {
            e.preventDefault()
            const factor = e.deltaY < 0 ? ZOOM_STEP : 1 / ZOOM_STEP
            this.update(wheelZoom(this.state, this.viewport(), e.offsetX, e.offsetY, factor))
        }, { passive: false })
    }

    setScale(scale: number): void {
        this.update(sliderZoom(this.state, scale))
    }

    setMode(mode: ViewState['mode']): void {
        this.update({ ...this.state, mode })
    }

    setDivider(divider: number): void {
        this.update({ ...this.state, divider })
    }

    update(next: ViewState): void {
        this.state = clampState(next, this.image)
        history.replaceState(null, '', encodeViewState(this.state))
        this.scheduleRender()
    }

    scheduleRender(): void {
        if (this.raf) return
        this.raf = requestAnimationFrame(() => {
            this.raf = 0
            this.render()
        })
    }

    private render(): void {
        const view = this.viewport()
        const { width, height } = this.image
        const model = this.modelLayer.sync(this.state, view, width, height)
        this.ctx.fillStyle = '#222'
        this.ctx.fillRect(0, 0, view.width, view.height)
        this.drawStale()
        this.drawLayer(model.draws, 0, view.width)
        if (this.state.mode === 'split') {
            const split = this.state.divider * view.width
            const bicubic = this.bicubicLayer.sync(this.state, view, width, height)
            this.drawLayer(bicubic.draws, split, view.width)
            this.ctx.strokeStyle = '#fff'
            this.ctx.beginPath()
            this.ctx.moveTo(split, 0)
            this.ctx.lineTo(split, view.height)
            this.ctx.stroke()
        }
        if (model.draws.every((d) => d.image !== null)) {
            this.lastDraws = {
                scale: this.state.scale,
                centerX: this.state.centerX,
                centerY: this.state.centerY,
                draws: model.draws,
            }
        }
    }

    /** Re-project the last fully drawn tile set under the current view so
     * scale changes refine progressively instead of blanking. */
    private drawStale(): void {
        const last = this.lastDraws
        if (!last || last.scale === this.state.scale) return
        const view = this.viewport()
        const ratio = this.state.scale / last.scale
        for (const d of last.draws) {
            if (d.image === null) continue
            const sx = (d.spec.x - this.state.centerX) * this.state.scale + view.width / 2
            const sy = (d.spec.y - this.state.centerY) * this.state.scale + view.height / 2
            this.ctx.drawImage(
                d.image as CanvasImageSource,
                sx, sy, d.spec.w * last.scale * ratio, d.spec.h * last.scale * ratio,
            )
        }
    }

    private drawLayer(draws: TileDraw[], clipFrom: number, clipTo: number): void {
        if (clipTo <= clipFrom) return
        this.ctx.save()
        this.ctx.beginPath()
        this.ctx.rect(clipFrom, 0, clipTo - clipFrom, this.canvas.height)
        this.ctx.clip()
        for (const d of draws) {
            if (d.image === null) continue
            this.ctx.drawImage(
                d.image as CanvasImageSource,
                d.spec.screenX, d.spec.screenY,
                d.spec.w * this.state.scale, d.spec.h * this.state.scale,
            )
        }
        this.ctx.restore()
    }

    private showBanner(message: string): void {
        if (!this.banner) return
        this.banner.textContent = message
        this.banner.style.display = 'block'
        setTimeout(() => {
            if (this.banner) this.banner.style.display = 'none'
        }, 4000)
    }
}
