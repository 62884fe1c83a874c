void CWE78_OS_Command_Injection__wchar_t_file_w32_execv_53_bad()
{
   wchar_t * data;
   wchar_t dataBuffer[100] = COMMAND_ARG2;
   data = dataBuffer;
   {
       /* Read input from a file */
       size_t dataLen = wcslen(data);
       FILE * pFile;
       /* if there is room in data, attempt to read the input from a file */
       if (100-dataLen > 1)
       {
           pFile = fopen(FILENAME, "r");
           if (pFile != NULL)
           {
               /* POTENTIAL FLAW: Read data from a file */
               if (fgetws(data+dataLen, (int)(100-dataLen), pFile) == NULL)
               {
                   printLine("fgetws() failed");
                   /* Restore NUL terminator if fgetws fails */
                   data[dataLen] = L'\0';
               }
               fclose(pFile);
           }
       }
   }
   CWE78_OS_Command_Injection__wchar_t_file_w32_execv_53b_badSink(data);
}
