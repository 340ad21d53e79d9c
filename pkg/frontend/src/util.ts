/** Trailing-edge debounce: at most one call per `ms` window. */
export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  ms: number,
): (...args: A) => void {
  let timer: ReturnType<typeof setTimeout> | null = null;
  return (...args: A) => {
    if (timer !== null) clearTimeout(timer);
    timer = setTimeout(() => {
      timer = null;
      fn(...args);
    }, ms);
  };
}

// Numbers shown to the operator come from gateway payloads and are rendered
// verbatim: String() round-trips the JSON number exactly, no rounding.
export function num(value: number): string {
  return String(value);
}

export function signed(value: number): string {
  return value > 0 ? "+" + String(value) : String(value);
}

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}
