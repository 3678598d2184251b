/** Trailing debounce: fires once, delayMs after the last call. */
export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  delayMs: number,
): ((...args: A) => void) & { cancel(): void; flush(): void } {
  let timer: ReturnType<typeof setTimeout> | null = null;
  let pending: A | null = null;

  const debounced = ((...args: A) => {
    pending = args;
    if (timer !== null) clearTimeout(timer);
    timer = setTimeout(() => {
      timer = null;
      const run = pending;
      pending = null;
      if (run) fn(...run);
    }, delayMs);
  }) as ((...args: A) => void) & { cancel(): void; flush(): void };

  debounced.cancel = () => {
    if (timer !== null) clearTimeout(timer);
    timer = null;
    pending = null;
  };

  debounced.flush = () => {
    if (timer === null) return;
    clearTimeout(timer);
    timer = null;
    const run = pending;
    pending = null;
    if (run) fn(...run);
  };

  return debounced;
}
