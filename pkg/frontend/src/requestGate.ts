/**
 * Monotonic sequence numbers for in-flight requests: the view only ever
 * renders the response to the *latest* edit, discarding stale arrivals.
 */
export class ResponseGate {
  private issued = 0;
  private rendered = 0;

  /** Stamp an outgoing request. */
  next(): number {
    this.issued += 1;
    return this.issued;
  }

  /** True when the response for `seq` is still the newest; records it. */
  accept(seq: number): boolean {
    if (seq <= this.rendered) {
      return false;
    }
    this.rendered = seq;
    return true;
  }

  get latest(): number {
    return this.issued;
  }
}
