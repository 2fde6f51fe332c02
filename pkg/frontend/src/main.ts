import { AivaClient, ApiError } from "./api.js";
import {
  applyChatFailure,
  applyChatSuccess,
  applyTranscript,
  beginRequest,
  initialState,
  withSession,
  type UiState,
} from "./state.js";
import { renderError, renderTranscript, setPending, updateAvatar } from "./render.js";

const SESSION_KEY = "aiva.session_id";
const BASE_URL_KEY = "aiva.base_url";
const DEFAULT_BASE_URL = "http://127.0.0.1:8000";

export interface AppOptions {
  doc: Document;
  client: AivaClient;
  storage: Storage;
}

export interface AppHandle {
  ready: Promise<void>;
  state(): UiState;
  send(text: string, imagePngBase64?: string): Promise<void>;
  newSession(): Promise<void>;
}

const requireElement = <T extends HTMLElement>(doc: Document, id: string): T => {
  const el = doc.getElementById(id);
  if (!el) {
    throw new Error(`missing #${id} in page`);
  }
  return el as T;
};

/** Wire the chat page. All service interaction flows through `client`;
 * the session id persists in `storage` so a page reload restores the
 * transcript from the server. */
export const initApp = (opts: AppOptions): AppHandle => {
  const { doc, client, storage } = opts;
  const transcriptEl = requireElement<HTMLElement>(doc, "transcript");
  const avatarEl = requireElement<HTMLImageElement>(doc, "avatar");
  const errorEl = requireElement<HTMLElement>(doc, "error");
  const formEl = requireElement<HTMLFormElement>(doc, "chat-form");
  const messageEl = requireElement<HTMLInputElement>(doc, "message");
  const imageEl = requireElement<HTMLInputElement>(doc, "image");
  const sendEl = requireElement<HTMLButtonElement>(doc, "send");
  const sessionLabelEl = requireElement<HTMLElement>(doc, "session-label");
  const newSessionEl = requireElement<HTMLButtonElement>(doc, "new-session");

  let state: UiState = initialState();

  const paint = (retry: (() => void) | null = null): void => {
    renderTranscript(doc, transcriptEl, state.turns);
    updateAvatar(avatarEl, state.expression);
    renderError(doc, errorEl, state.errorMessage, retry);
    setPending(sendEl, state.pending);
    sessionLabelEl.textContent = state.sessionId ? `session ${state.sessionId.slice(0, 8)}` : "";
  };

  const startFresh = async (): Promise<void> => {
    const sessionId = await client.createSession();
    storage.setItem(SESSION_KEY, sessionId);
    state = withSession(state, sessionId);
    state = { ...state, expression: "neutral" };
    paint();
  };

  const restoreOrCreate = async (): Promise<void> => {
    const stored = storage.getItem(SESSION_KEY);
    if (stored) {
      try {
        const transcript = await client.getSession(stored);
        state = applyTranscript(state, transcript);
        paint();
        return;
      } catch (err) {
        if (!(err instanceof ApiError && err.status === 404)) {
          throw err;
        }
        storage.removeItem(SESSION_KEY); // deleted on the server: offer a fresh one
      }
    }
    await startFresh();
  };

  const send = async (text: string, imagePngBase64?: string): Promise<void> => {
    const trimmed = text.trim();
    const sessionId = state.sessionId;
    if (!trimmed || !sessionId) {
      return;
    }
    const started = beginRequest(state);
    if (!started) {
      return; // a request is already in flight
    }
    state = started;
    paint();
    try {
      const response = await client.chat(sessionId, trimmed, imagePngBase64);
      state = applyChatSuccess(state, trimmed, response);
      paint();
    } catch (err) {
      const message = err instanceof Error ? err.message : "request failed";
      state = applyChatFailure(state, trimmed, message);
      paint(() => {
        void send(trimmed, imagePngBase64);
      });
    }
  };

  const readImage = (): Promise<string | undefined> => {
    const file = imageEl.files?.[0];
    if (!file) {
      return Promise.resolve(undefined);
    }
    return new Promise((resolve, reject) => {
      const reader = new FileReader();
      reader.onerror = () => reject(new Error("could not read image file"));
      reader.onload = () => {
        const url = String(reader.result);
        resolve(url.slice(url.indexOf(",") + 1)); // strip the data: prefix
      };
      reader.readAsDataURL(file);
    });
  };

  formEl.addEventListener("submit", (event) => {
    event.preventDefault();
    void (async () => {
      const image = await readImage();
      const text = messageEl.value;
      messageEl.value = "";
      imageEl.value = "";
      await send(text, image);
    })();
  });

  newSessionEl.addEventListener("click", () => {
    void startFresh();
  });

  const ready = restoreOrCreate();
  return {
    ready,
    state: () => state,
    send,
    newSession: startFresh,
  };
};

export const resolveBaseUrl = (storage: Storage): string =>
  storage.getItem(BASE_URL_KEY) ?? DEFAULT_BASE_URL;
