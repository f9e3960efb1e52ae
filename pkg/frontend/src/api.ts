// Thin typed client for the allocation service. Errors arrive as
// {code, message, detail} bodies and are rethrown as ServiceError so the UI
// can show them inline.

import type { EnrollmentEvent, ServiceErrorBody, StatePayload } from "./types.js";
import type { TrialSetupForm } from "./validation.js";

export class ServiceError extends Error {
  code: string;
  detail: Record<string, string> | null;

  constructor(body: ServiceErrorBody, public status: number) {
    super(body.message);
    this.code = body.code;
    this.detail = body.detail ?? null;
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, {
    headers: { "content-type": "application/json" },
    ...init,
  });
  const body: unknown = await response.json();
  if (!response.ok) {
    const err = body as Partial<ServiceErrorBody>;
    throw new ServiceError(
      {
        code: err.code ?? "error",
        message: err.message ?? `request failed with status ${response.status}`,
        detail: err.detail ?? null,
      },
      response.status,
    );
  }
  return body as T;
}

export class ApiClient {
  constructor(public baseUrl: string) {}

  createTrial(form: TrialSetupForm): Promise<{ id: string }> {
    const payload: Record<string, unknown> = {
      method: form.method,
      covariates: form.covariates,
      target_n: form.target_n,
      n0: form.n0,
      block_size: form.block_size,
      p0: form.p0,
      categories: form.categories,
      rho: form.rho,
      gamma_range: form.gamma_range,
    };
    if (form.seed !== null) payload.seed = form.seed;
    return request(`${this.baseUrl}/trials`, { method: "POST", body: JSON.stringify(payload) });
  }

  enroll(trialId: string, covariates: number[], subjectId?: string): Promise<EnrollmentEvent> {
    const payload: Record<string, unknown> = { covariates };
    if (subjectId) payload.subject_id = subjectId;
    return request(`${this.baseUrl}/trials/${trialId}/enroll`, {
      method: "POST",
      body: JSON.stringify(payload),
    });
  }

  getState(trialId: string): Promise<StatePayload> {
    return request(`${this.baseUrl}/trials/${trialId}`);
  }
}
