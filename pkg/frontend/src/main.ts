/** DOM wiring: re-render the pure view into #app after every state
 * transition and forward form events to the client. */

import { ChatClient, ServiceError } from "./api.js";
import { FixtureClient } from "./fixtures.js";
import { renderApp } from "./render.js";
import {
  AppState, beginSend, completeTurn, failRequest, initialState,
  setCompareAll, setEmotion,
} from "./state.js";
import { isEmotion } from "./types.js";

type Client = Pick<ChatClient, "chat" | "chatAll" | "health">;

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("service") ?? "http://127.0.0.1:8000";
const client: Client = params.has("fixtures") ? new FixtureClient() : new ChatClient(baseUrl);

let state: AppState = initialState();
let lastRequest: (() => void) | null = null;
const root = document.getElementById("app")!;

function update(next: AppState): void {
  state = next;
  const postBox = document.getElementById("post") as HTMLInputElement | null;
  const draft = postBox?.value ?? "";
  root.innerHTML = renderApp(state);
  const newPost = document.getElementById("post") as HTMLInputElement;
  if (!state.pending) {
    newPost.value = state.error ? draft : "";
    newPost.focus();
  }
  bind();
}

function bind(): void {
  const form = document.getElementById("chat-form") as HTMLFormElement;
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    void send();
  });
  const emotion = document.getElementById("emotion") as HTMLSelectElement;
  emotion.addEventListener("change", () => {
    if (isEmotion(emotion.value)) state = setEmotion(state, emotion.value);
  });
  const compare = document.getElementById("compare-all") as HTMLInputElement;
  compare.addEventListener("change", () => {
    state = setCompareAll(state, compare.checked);
  });
  const retry = document.getElementById("retry");
  retry?.addEventListener("click", () => lastRequest?.());
}

async function send(): Promise<void> {
  if (state.pending) return;
  const postBox = document.getElementById("post") as HTMLInputElement;
  const post = postBox.value.trim();
  if (!post) return;
  const emotion = state.selectedEmotion;
  const compareAll = state.compareAll;
  lastRequest = () => void send();
  update(beginSend(state));
  try {
    const response = await client.chat(post, emotion, { trace: true });
    const compare = compareAll ? await client.chatAll(post, { trace: false }) : null;
    update(completeTurn(state, post, emotion, response, compare));
  } catch (err) {
    if (err instanceof ServiceError) {
      const extra = err.allowed ? ` (allowed: ${err.allowed.join(", ")})` : "";
      update(failRequest(state, err.message + extra, err.retryable));
    } else {
      update(failRequest(state, String(err), true));
    }
  }
}

update(state);
void client.health().then(
  (h) => {
    if (!h.model_loaded) update(failRequest(state, "service is up but no model is loaded", true));
  },
  (err) => update(failRequest(state, err instanceof Error ? err.message : String(err), true)),
);
