import type { GatewayClient } from "./api.js";

export type AssistantApi = Pick<GatewayClient, "ask">;
import { el } from "./util.js";

/**
 * Chat panel over POST /assistant/query. Each answer bubble carries a
 * "grounded data" expander with the structured payload the text came
 * from, so an operator can always check the numbers.
 */
export class AssistantChat {
  private log: HTMLElement;
  private input: HTMLInputElement;
  private send: HTMLButtonElement;

  constructor(container: HTMLElement, private client: AssistantApi) {
    this.log = el("div", "chat-log");
    container.appendChild(this.log);

    const bar = el("div", "chat-bar");
    this.input = document.createElement("input");
    this.input.type = "text";
    this.input.placeholder = "Ask about the line…";
    this.send = document.createElement("button");
    this.send.textContent = "Send";
    this.send.disabled = true;
    this.input.addEventListener("input", () => {
      this.send.disabled = this.input.value.trim() === "";
    });
    this.input.addEventListener("keydown", (ev) => {
      if (ev.key === "Enter" && !this.send.disabled) this.submit();
    });
    this.send.addEventListener("click", () => this.submit());
    bar.appendChild(this.input);
    bar.appendChild(this.send);
    container.appendChild(bar);
  }

  private submit(): void {
    const q = this.input.value.trim();
    if (q === "") return;
    this.input.value = "";
    this.send.disabled = true;
    void this.ask(q);
  }

  async ask(q: string): Promise<void> {
    this.log.appendChild(el("div", "chat-bubble chat-user", q));
    await this.fetchAnswer(q);
  }

  private async fetchAnswer(q: string): Promise<void> {
    try {
      const answer = await this.client.ask(q);
      const bubble = el("div", "chat-bubble chat-answer");
      bubble.dataset.intent = answer.intent;
      bubble.dataset.source = answer.source;
      const text = el("p", "chat-text", answer.text);
      bubble.appendChild(text);

      const details = document.createElement("details");
      const summary = document.createElement("summary");
      summary.textContent = "grounded data";
      details.appendChild(summary);
      const pre = document.createElement("pre");
      pre.textContent = JSON.stringify(answer.data, null, 2);
      details.appendChild(pre);
      bubble.appendChild(details);
      this.log.appendChild(bubble);
    } catch (err) {
      const bubble = el("div", "chat-bubble chat-error");
      bubble.appendChild(
        el("p", "chat-text",
           err instanceof Error ? err.message : "request failed"),
      );
      const retry = document.createElement("button");
      retry.textContent = "Retry";
      retry.className = "chat-retry";
      retry.addEventListener("click", () => {
        bubble.remove();
        void this.fetchAnswer(q);
      });
      bubble.appendChild(retry);
      this.log.appendChild(bubble);
    }
    this.log.scrollTop = this.log.scrollHeight;
  }
}
