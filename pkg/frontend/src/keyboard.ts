/**
 * Keyboard shortcuts for the review flow:
 * - Y: verdict "yes"
 * - N: verdict "no"
 * - S: skip (only while the skip control is offered)
 */

export interface ReviewKeyboardOptions {
  onYes: () => void;
  onNo: () => void;
  onSkip?: () => void;
  /** Shortcuts only fire while this returns true (controls enabled). */
  isActive: () => boolean;
}

export function bindReviewKeyboard(target: EventTarget, options: ReviewKeyboardOptions): () => void {
  const handleKeyDown = (event: Event) => {
    const e = event as KeyboardEvent;
    // Ignore if user is typing in an input
    const el = e.target as HTMLElement | null;
    if (el && (el.tagName === "INPUT" || el.tagName === "TEXTAREA")) return;
    if (e.metaKey || e.ctrlKey || e.altKey) return;
    if (!options.isActive()) return;

    const key = e.key.toLowerCase();
    if (key === "y") {
      e.preventDefault();
      options.onYes();
    } else if (key === "n") {
      e.preventDefault();
      options.onNo();
    } else if (key === "s" && options.onSkip) {
      e.preventDefault();
      options.onSkip();
    }
  };

  target.addEventListener("keydown", handleKeyDown);
  return () => target.removeEventListener("keydown", handleKeyDown);
}
