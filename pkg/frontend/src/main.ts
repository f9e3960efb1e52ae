import { ConsoleApp } from "./app.js";

// served by the allocation service itself, so the API shares our origin
const app = new ConsoleApp(document, "");
app.mount();
