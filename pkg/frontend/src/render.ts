import { avatarAssetFor } from "./avatar.js";
import type { TranscriptTurn } from "./types.js";

/** Rebuild the transcript list to mirror the server state exactly. */
export const renderTranscript = (
  doc: Document,
  container: HTMLElement,
  turns: readonly TranscriptTurn[],
): void => {
  container.textContent = "";
  for (const turn of turns) {
    const row = doc.createElement("div");
    row.className = `turn ${turn.speaker}`;

    const bubble = doc.createElement("div");
    bubble.className = "bubble";
    bubble.textContent = turn.text;
    row.appendChild(bubble);

    if (turn.speaker === "user" && turn.detected_sentiment) {
      const badge = doc.createElement("span");
      badge.className = `badge badge-${turn.detected_sentiment.toLowerCase()}`;
      badge.textContent = turn.detected_sentiment;
      row.appendChild(badge);
    }
    container.appendChild(row);
  }
  container.scrollTop = container.scrollHeight;
};

/** Swap the avatar image to the given expression asset. */
export const updateAvatar = (img: HTMLImageElement, expression: string): void => {
  img.src = avatarAssetFor(expression);
  img.alt = `avatar looking ${expression}`;
  img.dataset.expression = expression;
};

export const renderError = (
  doc: Document,
  container: HTMLElement,
  message: string | null,
  onRetry: (() => void) | null,
): void => {
  container.textContent = "";
  if (!message) {
    container.hidden = true;
    return;
  }
  container.hidden = false;
  const text = doc.createElement("span");
  text.textContent = message;
  container.appendChild(text);
  if (onRetry) {
    const button = doc.createElement("button");
    button.type = "button";
    button.className = "retry";
    button.textContent = "Retry";
    button.addEventListener("click", onRetry);
    container.appendChild(button);
  }
};

export const setPending = (sendButton: HTMLButtonElement, pending: boolean): void => {
  sendButton.disabled = pending;
  sendButton.textContent = pending ? "…" : "Send";
};
