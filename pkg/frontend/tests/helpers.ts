import { App } from "../src/app.js";
import { FixtureCollector, installFetch } from "./fixture.js";

const running: App[] = [];

export function mount(): HTMLElement {
  document.body.innerHTML = "";
  const root = document.createElement("main");
  document.body.append(root);
  return root;
}

export async function boot(
  collector: FixtureCollector,
): Promise<{ root: HTMLElement; app: App }> {
  installFetch(collector);
  const root = mount();
  const app = new App(root);
  running.push(app);
  await app.start();
  return { root, app };
}

export function stopAll(): void {
  for (const app of running.splice(0)) {
    app.stop();
  }
}

// two macrotask turns drain every promise chain our fake fetch produces
export async function flush(): Promise<void> {
  await new Promise((resolve) => setTimeout(resolve, 0));
  await new Promise((resolve) => setTimeout(resolve, 0));
}
