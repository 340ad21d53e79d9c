import { GatewayClient } from "./api.js";
import { App } from "./app.js";

const app = new App(document, {
  client: new GatewayClient(""),
  streamFactory: (url) => new EventSource(url),
});

app.init().catch((err) => {
  const banner = document.getElementById("status-banner");
  if (banner) {
    banner.style.display = "";
    banner.textContent =
      err instanceof Error ? `gateway unreachable: ${err.message}` : "gateway unreachable";
  }
});
