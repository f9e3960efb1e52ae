// @vitest-environment jsdom
//
// Scripted browser session against a real allocation service: create an
// N=8, n0=4 trial, enroll 8 subjects through the actual DOM, and check the
// final dashboard. The service is spawned as a child process; the console
// must get every displayed number from its payloads.

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, dirname } from "node:path";
import { fileURLToPath } from "node:url";

import { afterAll, beforeAll, expect, test } from "vitest";

import { ConsoleApp } from "../src/app.js";

const here = dirname(fileURLToPath(import.meta.url));
const port = 8900 + Math.floor(Math.random() * 500);
const baseUrl = `http://127.0.0.1:${port}`;
let service: ChildProcess;

async function waitForService(timeoutMs = 20_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${baseUrl}/healthz`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 200));
  }
  throw new Error("allocation service did not come up");
}

beforeAll(async () => {
  const dataDir = mkdtempSync(join(tmpdir(), "console-e2e-"));
  service = spawn(
    "python3",
    ["-m", "covadapt.cli", "serve", "--listen", `127.0.0.1:${port}`, "--data-dir", dataDir],
    { stdio: "ignore" },
  );
  await waitForService();
}, 30_000);

afterAll(() => {
  service?.kill("SIGKILL");
});

function loadConsoleDom(): void {
  const html = readFileSync(join(here, "..", "index.html"), "utf-8");
  const body = /<body>([\s\S]*)<\/body>/.exec(html)?.[1] ?? "";
  document.body.innerHTML = body.replace(/<script[\s\S]*?<\/script>/g, "");
}

function setField(name: string, value: string): void {
  const el = document.querySelector<HTMLInputElement | HTMLSelectElement>(`[name="${name}"]`);
  if (!el) throw new Error(`no form field named ${name}`);
  el.value = value;
}

function submit(selector: string): void {
  const form = document.querySelector<HTMLFormElement>(selector)!;
  form.dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
}

function metric(name: string): string {
  const el = document.querySelector(`[data-metric="${name}"]`);
  if (!el) throw new Error(`dashboard is missing [data-metric="${name}"]`);
  return el.textContent ?? "";
}

test("coordinator session: create, enroll 8, balanced dashboard", async () => {
  loadConsoleDom();
  const app = new ConsoleApp(document, baseUrl);
  app.mount();

  setField("covariates", "age, weight");
  setField("method", "bkw");
  setField("target_n", "8");
  setField("n0", "4");
  setField("block_size", "2");
  setField("seed", "2718");
  submit("#setup-form");
  await app.settle();

  expect(document.querySelector<HTMLElement>("#setup-errors")!.textContent).toBe("");
  expect(app.trialId).not.toBeNull();
  expect(document.querySelector<HTMLElement>("#trial-section")!.hidden).toBe(false);

  const values = [
    [61, 70.2], [55, 81.0], [68, 64.5], [72, 90.3],
    [58, 77.7], [64, 69.9], [70, 85.1], [49, 73.4],
  ];
  for (const [age, weight] of values) {
    setField("cov:age", String(age));
    setField("cov:weight", String(weight));
    submit("#enroll-form");
    const button = document.querySelector<HTMLButtonElement>("#enroll-button")!;
    expect(button.disabled).toBe(true); // double-submit guard while in flight
    await app.settle();
    expect(button.disabled).toBe(false);
    expect(document.querySelector("#banner .headline")!.textContent).toMatch(/^Group [12]$/);
  }

  // final dashboard: every planned subject enrolled, groups exactly balanced
  expect(metric("enrolled")).toBe("8");
  expect(metric("size-diff")).toBe("0");
  expect(metric("group-sizes")).toBe("4 : 4");
  expect(document.querySelector("#balance")!.innerHTML).toContain("status: full");

  // the numbers on screen are exactly the service's, not recomputed
  const state = await (await fetch(`${baseUrl}/trials/${app.trialId}`)).json();
  expect(metric("size-diff")).toBe(String(state.metrics.abs_group_size_diff));
  expect(metric("energy")).not.toBe("n/a");

  // a ninth subject bounces with the trial-full banner
  setField("cov:age", "66");
  setField("cov:weight", "75");
  submit("#enroll-form");
  await app.settle();
  expect(document.querySelector("#banner")!.textContent).toContain("Trial is full");
}, 30_000);

test("non-numeric input never leaves the browser", async () => {
  loadConsoleDom();
  const app = new ConsoleApp(document, baseUrl);
  app.mount();

  setField("covariates", "age");
  setField("method", "ps");
  setField("target_n", "6");
  setField("n0", "2");
  setField("block_size", "2");
  submit("#setup-form");
  await app.settle();

  const fetchesBefore = app.energyHistory.length;
  setField("cov:age", "not a number");
  submit("#enroll-form");
  await app.settle();
  expect(document.querySelector<HTMLElement>("#enroll-errors")!.textContent).toContain("age");
  const state = await (await fetch(`${baseUrl}/trials/${app.trialId}`)).json();
  expect(state.enrolled).toBe(0); // nothing was sent
  expect(app.energyHistory.length).toBe(fetchesBefore);
});

test("client-side validation mirrors the server rules", async () => {
  loadConsoleDom();
  const app = new ConsoleApp(document, baseUrl);
  app.mount();

  setField("covariates", "age");
  setField("method", "bkw");
  setField("target_n", "7"); // robust method needs an even N
  setField("n0", "4");
  setField("block_size", "2");
  submit("#setup-form");
  await app.settle();
  expect(document.querySelector<HTMLElement>("#setup-errors")!.textContent).toContain("even");
  expect(app.trialId).toBeNull();
});
