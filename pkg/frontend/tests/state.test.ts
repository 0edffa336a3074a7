import { describe, expect, it } from 'vitest'
import { ViewState, clampState, decodeViewState, encodeViewState } from '../src/state'

describe('view state URL fragment', () => {
    it('round-trips through encode/decode', () => {
        const s: ViewState = {
            imageId: 'sample_01',
            centerX: 123.45,
            centerY: 67.8,
            scale: 6.7,
            mode: 'split',
            overlay: 'retrieval',
            divider: 0.25,
        }
        expect(decodeViewState(encodeViewState(s))).toEqual(s)
    })

    it('round-trips the defaults too', () => {
        const s: ViewState = {
            imageId: 'a b/c',
            centerX: 0,
            centerY: 0,
            scale: 1,
            mode: 'single',
            overlay: 'none',
            divider: 0.5,
        }
        expect(decodeViewState(encodeViewState(s))).toEqual(s)
    })

    it('rejects fragments without an image id', () => {
        expect(decodeViewState('')).toBeNull()
        expect(decodeViewState('#cx=3&cy=4')).toBeNull()
    })

    it('clamps out-of-range decoded values', () => {
        const decoded = decodeViewState('#image=x&scale=42&divider=-3')
        expect(decoded?.scale).toBe(8)
        expect(decoded?.divider).toBe(0)
    })

    it('clampState keeps the center inside the image', () => {
        const s: ViewState = {
            imageId: 'x', centerX: -50, centerY: 900, scale: 2,
            mode: 'single', overlay: 'none', divider: 0.5,
        }
        const c = clampState(s, { imageId: 'x', width: 192, height: 192 })
        expect(c.centerX).toBe(0)
        expect(c.centerY).toBe(192)
    })
})
