import { HttpTransport } from './transport'
import { Viewer } from './viewer'

async function boot(): Promise<void> {
    const canvas = document.getElementById('view') as HTMLCanvasElement
    const slider = document.getElementById('scale') as HTMLInputElement
    const scaleLabel = document.getElementById('scale-label') as HTMLElement
    const modeToggle = document.getElementById('mode') as HTMLInputElement
    const divider = document.getElementById('divider') as HTMLInputElement
    const picker = document.getElementById('image') as HTMLSelectElement
    const banner = document.getElementById('banner') as HTMLElement

    const transport = new HttpTransport()
    const images = await transport.listImages()
    if (images.length === 0) {
        banner.textContent = 'no images registered with the tile service'
        banner.style.display = 'block'
        return
    }
    for (const info of images) {
        const option = document.createElement('option')
        option.value = info.image_id
        option.textContent = `${info.image_id} (${info.width}x${info.height})`
        picker.append(option)
    }

    let viewer: Viewer | null = null
    const open = (imageId: string) => {
        const info = images.find((i) => i.image_id === imageId) ?? images[0]
        viewer = new Viewer(canvas, transport, {
            imageId: info.image_id,
            width: info.width,
            height: info.height,
        }, banner)
        slider.value = String(viewer.state.scale)
        scaleLabel.textContent = `x${viewer.state.scale.toFixed(2)}`
        modeToggle.checked = viewer.state.mode === 'split'
        viewer.scheduleRender()
    }

    slider.addEventListener('input', () => {
        const scale = Number(slider.value)
        scaleLabel.textContent = `x${scale.toFixed(2)}`
        viewer?.setScale(scale)
    })
    modeToggle.addEventListener('change', () => {
        viewer?.setMode(modeToggle.checked ? 'split' : 'single')
    })
    divider.addEventListener('input', () => {
        viewer?.setDivider(Number(divider.value))
    })
    picker.addEventListener('change', () => open(picker.value))

    open(picker.value || images[0].image_id)
}

boot().catch((err) => {
    const banner = document.getElementById('banner')
    if (banner instanceof HTMLElement) {
        banner.textContent = `viewer failed to start: ${err}`
        banner.style.display = 'block'
    }
})
