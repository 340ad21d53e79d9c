import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "happy-dom",
    environmentOptions: {
      happyDOM: {
        settings: {
          // Tests talk to a fixture gateway on a random localhost port. The
          // real dashboard is served by the gateway itself, so same-origin
          // never bites in production.
          fetch: { disableSameOriginPolicy: true },
        },
      },
    },
    include: ["tests/**/*.test.ts"],
    testTimeout: 10_000,
  },
});
