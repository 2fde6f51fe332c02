// Browser entry point; tests drive initApp directly instead.
import { AivaClient } from "./api.js";
import { initApp, resolveBaseUrl, type AppHandle } from "./main.js";

declare global {
  interface Window {
    aivaApp?: AppHandle;
  }
}

const client = new AivaClient(resolveBaseUrl(window.localStorage));
window.aivaApp = initApp({ doc: document, client, storage: window.localStorage });
