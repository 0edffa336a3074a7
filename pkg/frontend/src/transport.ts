/** Network boundary. Tests substitute a mock that logs URLs; the browser
 * build fetches PNG tiles and decodes them to ImageBitmap. */
export interface Transport {
    fetchTile(url: string, signal: AbortSignal): Promise<unknown>
}

export class HttpTransport implements Transport {
    constructor(private baseUrl: string = '') {}

    async fetchTile(url: string, signal: AbortSignal): Promise<ImageBitmap> {
        const res = await fetch(this.baseUrl + url, { signal })
        if (!res.ok) {
            throw new Error(`tile request failed: ${res.status}`)
        }
        return createImageBitmap(await res.blob())
    }

    async listImages(): Promise<{ image_id: string; width: number; height: number }[]> {
        const res = await fetch(this.baseUrl + '/v1/images')
        if (!res.ok) {
            throw new Error(`image list failed: ${res.status}`)
        }
        return res.json()
    }
}
