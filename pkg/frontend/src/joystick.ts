/**
 * Pointer-driven virtual joystick: a base circle with a knob that tracks
 * the pointer while captured and springs back to center on release.
 * Normalized output in [-1, 1]^2, y up = forward.
 */

export class VirtualJoystick {
  private pointerId: number | null = null;
  private _x = 0;
  private _y = 0;

  constructor(
    private readonly base: HTMLElement,
    private readonly knob: HTMLElement,
    private readonly onChange: (x: number, y: number) => void,
  ) {
    base.addEventListener("pointerdown", (e) => this.down(e));
    base.addEventListener("pointermove", (e) => this.move(e));
    base.addEventListener("pointerup", (e) => this.up(e));
    base.addEventListener("pointercancel", (e) => this.up(e));
    this.render();
  }

  get x(): number {
    return this._x;
  }

  get y(): number {
    return this._y;
  }

  private down(e: PointerEvent): void {
    if (this.pointerId !== null) return;
    this.pointerId = e.pointerId;
    this.base.setPointerCapture(e.pointerId);
    this.track(e);
  }

  private move(e: PointerEvent): void {
    if (e.pointerId !== this.pointerId) return;
    this.track(e);
  }

  private up(e: PointerEvent): void {
    if (e.pointerId !== this.pointerId) return;
    this.pointerId = null;
    this._x = 0;
    this._y = 0;
    this.render();
    this.onChange(0, 0);
  }

  private track(e: PointerEvent): void {
    const rect = this.base.getBoundingClientRect();
    const cx = rect.left + rect.width / 2;
    const cy = rect.top + rect.height / 2;
    const r = rect.width / 2;
    let x = (e.clientX - cx) / r;
    let y = -(e.clientY - cy) / r; // screen y grows downward
    const norm = Math.hypot(x, y);
    if (norm > 1) {
      x /= norm;
      y /= norm;
    }
    this._x = x;
    this._y = y;
    this.render();
    this.onChange(x, y);
  }

  private render(): void {
    const r = this.base.clientWidth / 2;
    this.knob.style.transform =
      `translate(${this._x * r * 0.7}px, ${-this._y * r * 0.7}px)`;
  }
}
