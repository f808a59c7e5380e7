// Debounce plus a latest-wins single-flight sender: slider drags collapse
// to one request per quiet period, and at most one request is in the air.

export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number,
): (...args: A) => void {
  let timer: ReturnType<typeof setTimeout> | undefined;
  return (...args: A) => {
    if (timer !== undefined) clearTimeout(timer);
    timer = setTimeout(() => {
      timer = undefined;
      fn(...args);
    }, waitMs);
  };
}

export type SendFn<T, R> = (payload: T) => Promise<R>;

/**
 * Serializes sends: while one request is in flight, newer payloads replace
 * each other and only the latest goes out once the wire is free.
 */
export class LatestWinsSender<T, R> {
  private inFlight = false;
  private queued: T | undefined;

  constructor(
    private readonly send: SendFn<T, R>,
    private readonly onResult: (result: R) => void,
    private readonly onError: (error: unknown) => void = () => {},
  ) {}

  get busy(): boolean {
    return this.inFlight;
  }

  submit(payload: T): void {
    if (this.inFlight) {
      this.queued = payload;
      return;
    }
    void this.pump(payload);
  }

  private async pump(payload: T): Promise<void> {
    this.inFlight = true;
    try {
      const result = await this.send(payload);
      this.onResult(result);
    } catch (error) {
      this.onError(error);
    } finally {
      this.inFlight = false;
      if (this.queued !== undefined) {
        const next = this.queued;
        this.queued = undefined;
        void this.pump(next);
      }
    }
  }
}
