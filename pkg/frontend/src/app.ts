// DOM wiring: three panels (auth, chat, history) over one ChatClient.
// Rendering only; every protocol rule lives in client.ts.

import { ApiError } from "./api.js";
import { ChatClient, DigestMismatchError } from "./client.js";
import type { TranscriptEntry } from "./client.js";

const client = new ChatClient();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

const authView = el<HTMLDivElement>("auth-view");
const chatView = el<HTMLDivElement>("chat-view");
const authMessage = el<HTMLParagraphElement>("auth-message");
const userInput = el<HTMLInputElement>("auth-user");
const passwordInput = el<HTMLInputElement>("auth-password");
const transcriptEl = el<HTMLDivElement>("transcript");
const chatInput = el<HTMLInputElement>("chat-input");
const sendButton = el<HTMLButtonElement>("send-button");
const confirmBar = el<HTMLDivElement>("confirm-bar");
const sessionLabel = el<HTMLSpanElement>("session-label");
const historyPanel = el<HTMLDivElement>("history-panel");
const historyList = el<HTMLUListElement>("history-list");

function showAuth(message = ""): void {
  authMessage.textContent = message;
  authView.hidden = false;
  chatView.hidden = true;
}

function showChat(): void {
  authView.hidden = true;
  chatView.hidden = false;
  sessionLabel.textContent = client.session
    ? `${client.session.userName} · account ${client.session.account}`
    : "";
  chatInput.focus();
}

function renderEntry(entry: TranscriptEntry): void {
  const row = document.createElement("div");
  row.className = "msg " + entry.speaker;
  const text = document.createElement("span");
  text.textContent = entry.text;
  row.appendChild(text);
  if (entry.statusBadge) {
    const badge = document.createElement("span");
    badge.className = "badge " + entry.statusBadge.toLowerCase();
    badge.textContent = entry.statusBadge;
    row.appendChild(badge);
  }
  transcriptEl.appendChild(row);
  transcriptEl.scrollTop = transcriptEl.scrollHeight;
}

function setBusy(busy: boolean): void {
  chatInput.disabled = busy;
  sendButton.disabled = busy;
}

function syncConfirmBar(): void {
  confirmBar.hidden = !client.awaitingConfirmation;
}

async function sendText(text: string): Promise<void> {
  if (!text.trim() || client.busy) return;
  setBusy(true);
  const before = client.transcript.length;
  try {
    await client.send(text.trim());
  } catch (err) {
    if (err instanceof ApiError && err.status === 401) {
      showAuth("Session expired, please log in again.");
      return;
    }
    renderEntry({
      speaker: "bot",
      text: `Request failed: ${err instanceof Error ? err.message : err}. Please retry.`,
      timestamp: Date.now(),
    });
    return;
  } finally {
    setBusy(false);
    syncConfirmBar();
  }
  for (const entry of client.transcript.slice(before)) renderEntry(entry);
  chatInput.value = "";
}

el<HTMLButtonElement>("register-button").onclick = async () => {
  try {
    const result = await client.register(userInput.value.trim(), passwordInput.value);
    authMessage.textContent = result.account
      ? `Registered. Your account number is ${result.account}. Now log in.`
      : "Registered. Now log in.";
  } catch (err) {
    if (err instanceof DigestMismatchError) {
      authMessage.textContent = "Registration reply failed verification; keys discarded.";
    } else if (err instanceof ApiError && err.status === 409) {
      authMessage.textContent = "That user name is already registered.";
    } else {
      authMessage.textContent = `Registration failed: ${err instanceof Error ? err.message : err}`;
    }
  }
};

el<HTMLButtonElement>("login-button").onclick = async () => {
  try {
    await client.login(userInput.value.trim(), passwordInput.value);
    transcriptEl.innerHTML = "";
    historyPanel.hidden = true;
    showChat();
  } catch (err) {
    authMessage.textContent = `Login failed: ${err instanceof Error ? err.message : err}`;
  }
};

sendButton.onclick = () => void sendText(chatInput.value);
chatInput.onkeyup = (ev) => {
  if (ev.key === "Enter") void sendText(chatInput.value);
};

el<HTMLButtonElement>("confirm-yes").onclick = () => void sendText("yes");
el<HTMLButtonElement>("confirm-no").onclick = () => void sendText("no");

el<HTMLButtonElement>("history-button").onclick = async () => {
  try {
    const entries = await client.history();
    historyList.innerHTML = "";
    for (const item of entries) {
      const li = document.createElement("li");
      li.textContent = `block ${item.height}: balance ${item.value}`;
      historyList.appendChild(li);
    }
    historyPanel.hidden = false;
  } catch (err) {
    if (err instanceof ApiError && err.status === 401) showAuth("Session expired, please log in again.");
  }
};

el<HTMLButtonElement>("logout-button").onclick = () => {
  client.logout();
  showAuth("Logged out; stored keys cleared.");
};

showAuth();
