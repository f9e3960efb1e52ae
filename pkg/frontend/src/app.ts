// DOM wiring for the console: setup form -> create trial, enrollment form ->
// POST enroll + refresh dashboards. No allocation math happens here; the
// dashboards re-render whatever GET /trials/{id} returned.

import { ApiClient, ServiceError } from "./api.js";
import { renderBalance, renderBanner, renderNotice } from "./render.js";
import {
  parseCovariateNames,
  parseGammaRange,
  validateSetup,
  type TrialSetupForm,
} from "./validation.js";

function field(form: HTMLFormElement, name: string): string {
  const el = form.elements.namedItem(name) as HTMLInputElement | HTMLSelectElement | null;
  return el ? el.value.trim() : "";
}

function numberField(form: HTMLFormElement, name: string, fallback: number): number {
  const raw = field(form, name);
  return raw === "" ? fallback : Number(raw);
}

export class ConsoleApp {
  api: ApiClient;
  doc: Document;
  trialId: string | null = null;
  covariates: string[] = [];
  energyHistory: number[] = [];
  // the last in-flight handler, so a driver (or test) can await settledness
  pending: Promise<void> = Promise.resolve();

  constructor(doc: Document, baseUrl: string) {
    this.doc = doc;
    this.api = new ApiClient(baseUrl);
  }

  mount(): void {
    const setup = this.doc.querySelector<HTMLFormElement>("#setup-form");
    const enroll = this.doc.querySelector<HTMLFormElement>("#enroll-form");
    if (!setup || !enroll) throw new Error("console markup is missing its forms");
    setup.addEventListener("submit", (event) => {
      event.preventDefault();
      this.pending = this.handleCreate(setup);
    });
    enroll.addEventListener("submit", (event) => {
      event.preventDefault();
      this.pending = this.handleEnroll(enroll);
    });
  }

  settle(): Promise<void> {
    return this.pending;
  }

  readSetup(form: HTMLFormElement): TrialSetupForm {
    const blockRaw = field(form, "block_size");
    const seedRaw = field(form, "seed");
    return {
      covariates: parseCovariateNames(field(form, "covariates")),
      method: field(form, "method"),
      target_n: numberField(form, "target_n", NaN),
      n0: numberField(form, "n0", 8),
      block_size: blockRaw === "" ? null : Number(blockRaw),
      p0: numberField(form, "p0", 0.8),
      categories: numberField(form, "categories", 3),
      rho: numberField(form, "rho", 6),
      gamma_range: parseGammaRange(field(form, "gamma") || "0.5:4"),
      seed: seedRaw === "" ? null : Number(seedRaw),
    };
  }

  async handleCreate(form: HTMLFormElement): Promise<void> {
    const errorsBox = this.doc.querySelector<HTMLElement>("#setup-errors")!;
    const setup = this.readSetup(form);
    const problems = validateSetup(setup);
    if (Object.keys(problems).length > 0) {
      errorsBox.textContent = Object.entries(problems)
        .map(([key, message]) => `${key}: ${message}`)
        .join("\n");
      return;
    }
    errorsBox.textContent = "";
    try {
      const created = await this.api.createTrial(setup);
      this.trialId = created.id;
      this.covariates = setup.covariates;
      this.energyHistory = [];
      this.buildEnrollFields();
      this.doc.querySelector<HTMLElement>("#trial-section")!.hidden = false;
      this.doc.querySelector<HTMLElement>("#trial-label")!.textContent =
        `${created.id} · ${setup.method} · N=${setup.target_n}`;
      this.doc.querySelector<HTMLElement>("#banner")!.innerHTML = "";
      await this.refreshBalance();
    } catch (error) {
      errorsBox.textContent = describeError(error);
    }
  }

  buildEnrollFields(): void {
    const host = this.doc.querySelector<HTMLElement>("#enroll-fields")!;
    host.innerHTML = "";
    for (const name of this.covariates) {
      const label = this.doc.createElement("label");
      label.textContent = name;
      const input = this.doc.createElement("input");
      input.name = `cov:${name}`;
      input.setAttribute("inputmode", "decimal");
      input.required = true;
      label.appendChild(input);
      host.appendChild(label);
    }
  }

  async handleEnroll(form: HTMLFormElement): Promise<void> {
    if (!this.trialId) return;
    const errorsBox = this.doc.querySelector<HTMLElement>("#enroll-errors")!;
    const button = this.doc.querySelector<HTMLButtonElement>("#enroll-button")!;
    const values: number[] = [];
    const bad: string[] = [];
    for (const name of this.covariates) {
      const input = form.elements.namedItem(`cov:${name}`) as HTMLInputElement;
      const value = Number(input.value.trim());
      if (input.value.trim() === "" || !Number.isFinite(value)) {
        bad.push(name);
      }
      values.push(value);
    }
    if (bad.length > 0) {
      // validation failure: no request leaves the browser
      errorsBox.textContent = `enter a number for: ${bad.join(", ")}`;
      return;
    }
    errorsBox.textContent = "";
    button.disabled = true; // no double submits while the request is in flight
    try {
      const subjectId = field(form, "subject_id");
      const event = await this.api.enroll(this.trialId, values, subjectId || undefined);
      this.doc.querySelector<HTMLElement>("#banner")!.innerHTML = renderBanner(event);
      this.clearEnrollInputs(form);
      await this.refreshBalance();
    } catch (error) {
      if (error instanceof ServiceError && error.code === "trial_full") {
        this.doc.querySelector<HTMLElement>("#banner")!.innerHTML = renderNotice(
          "Trial is full: every planned subject has been enrolled.",
        );
      } else {
        // typed values are preserved so the coordinator can retry
        errorsBox.textContent = describeError(error);
      }
    } finally {
      button.disabled = false;
    }
  }

  clearEnrollInputs(form: HTMLFormElement): void {
    for (const name of this.covariates) {
      const input = form.elements.namedItem(`cov:${name}`) as HTMLInputElement;
      input.value = "";
    }
  }

  async refreshBalance(): Promise<void> {
    if (!this.trialId) return;
    const host = this.doc.querySelector<HTMLElement>("#balance")!;
    try {
      const state = await this.api.getState(this.trialId);
      const energy = state.metrics?.energy;
      if (typeof energy === "number") this.energyHistory.push(energy);
      host.innerHTML = renderBalance(state, this.energyHistory);
    } catch (error) {
      host.innerHTML = renderNotice(describeError(error));
    }
  }
}

function describeError(error: unknown): string {
  if (error instanceof ServiceError) {
    const detail = error.detail
      ? ": " + Object.entries(error.detail).map(([k, v]) => `${k}: ${v}`).join("; ")
      : "";
    return `${error.message}${detail}`;
  }
  if (error instanceof Error) return `network problem: ${error.message}`;
  return String(error);
}
